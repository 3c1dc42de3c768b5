"""TOML configuration for the node, orderer, gateway and simulator CLIs.

The RADCHAIN_CONFIG environment variable overrides the --config path.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import RadchainError

ENV_CONFIG = "RADCHAIN_CONFIG"


@dataclass
class ChannelConfig:
    channel_id: str
    members: list[str]
    threshold: int = 1
    keywords: list[str] = field(default_factory=list)


@dataclass
class UserConfig:
    user_id: str
    org_id: str
    role: str


@dataclass
class GatewayConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    session_ttl_s: int = 3600
    poll_interval_s: float = 0.2
    static_dir: Optional[str] = None


@dataclass
class NetworkConfig:
    orgs: dict[str, int] = field(default_factory=dict)
    data_dir: Optional[str] = None
    batch_size: int = 10
    batch_window_s: float = 0.5
    token_ttl_s: int = 900
    keystore_dir: Optional[str] = None


@dataclass
class AppConfig:
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    channels: list[ChannelConfig] = field(default_factory=list)
    users: list[UserConfig] = field(default_factory=list)
    demo: bool = False
    demo_seed: int = 42
    sim_overrides: dict = field(default_factory=dict)


def resolve_config_path(cli_path: Optional[str]) -> Optional[str]:
    env = os.environ.get(ENV_CONFIG)
    return env or cli_path


def load_config(path: Optional[str]) -> AppConfig:
    if path is None:
        return AppConfig(demo=True)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except OSError as exc:
        raise RadchainError(f"cannot read config {path!r}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise RadchainError(f"invalid TOML in {path!r}: {exc}") from exc

    cfg = AppConfig()
    gw = raw.get("gateway", {})
    cfg.gateway = GatewayConfig(
        host=gw.get("host", "127.0.0.1"),
        port=int(gw.get("port", 8080)),
        session_ttl_s=int(gw.get("session_ttl_s", 3600)),
        poll_interval_s=float(gw.get("poll_interval_s", 0.2)),
        static_dir=gw.get("static_dir"),
    )
    net = raw.get("network", {})
    cfg.network = NetworkConfig(
        orgs={k: int(v) for k, v in net.get("orgs", {}).items()},
        data_dir=net.get("data_dir"),
        batch_size=int(net.get("batch_size", 10)),
        batch_window_s=float(net.get("batch_window_s", 0.5)),
        token_ttl_s=int(net.get("token_ttl_s", 900)),
        keystore_dir=net.get("keystore_dir"),
    )
    for ch in raw.get("channel", []):
        cfg.channels.append(
            ChannelConfig(
                channel_id=ch["id"],
                members=list(ch["members"]),
                threshold=int(ch.get("threshold", 1)),
                keywords=list(ch.get("keywords", [])),
            )
        )
    for user in raw.get("user", []):
        cfg.users.append(UserConfig(user["id"], user["org"], user["role"]))
    demo = raw.get("demo", {})
    cfg.demo = bool(demo.get("enabled", not cfg.channels))
    cfg.demo_seed = int(demo.get("seed", 42))
    sim = raw.get("sim", {})
    if sim:
        cfg.sim_overrides = {
            key: tuple(value) if isinstance(value, list) else value
            for key, value in sim.items()
        }
    return cfg
