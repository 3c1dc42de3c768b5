"""Command-line entry points: node, orderer, gateway, sim, client."""

from __future__ import annotations

import argparse
import json
import os
import sys
import urllib.request

from .config import load_config, resolve_config_path


def _sim(args: argparse.Namespace) -> int:
    from dataclasses import fields

    from .worksim import (
        SimConfig,
        compare,
        events_to_csv,
        report_to_csv,
        report_to_text,
        run_baseline,
        run_blockchain,
    )

    app_cfg = load_config(resolve_config_path(args.config))
    unknown = set(app_cfg.sim_overrides) - {f.name for f in fields(SimConfig)}
    if unknown:
        raise SystemExit(f"unknown [sim] config keys: {sorted(unknown)}")
    config = SimConfig(**app_cfg.sim_overrides)
    config.rng_seed = args.seed
    if args.exams:
        config.n_exams = args.exams
    config.validate()
    os.makedirs(args.out, exist_ok=True)

    def write(name: str, text: str) -> None:
        path = os.path.join(args.out, name)
        with open(path, "w") as f:
            f.write(text)
        print(f"wrote {path}")

    runs = {}
    if args.workflow in ("baseline", "both"):
        runs["baseline"] = run_baseline(config)
    if args.workflow in ("blockchain", "both"):
        runs["blockchain"] = run_blockchain(config)
    for name, run in runs.items():
        write(f"{name}_events.csv", events_to_csv(run.events))
        write(f"{name}_report.csv", report_to_csv(run.report))
        write(f"{name}_report.txt", report_to_text(run.report))
        print(report_to_text(run.report))
    if len(runs) == 2:
        cmp = compare(runs["baseline"].report, runs["blockchain"].report)
        write("comparison.csv", cmp.to_csv())
        write("comparison.txt", cmp.to_text())
        print(cmp.to_text())
    return 0


def _build_gateway_context(args: argparse.Namespace):
    from .gateway import GatewayContext, Keystore, build_demo_context
    from .identity import Role
    from .network import Network
    from .pacsvault import PacsVault

    cfg = load_config(resolve_config_path(args.config))
    if cfg.demo or not cfg.channels:
        ctx = build_demo_context(
            seed=cfg.demo_seed,
            data_dir=cfg.network.data_dir,
            keystore_dir=cfg.network.keystore_dir,
            session_ttl_s=cfg.gateway.session_ttl_s,
            static_dir=cfg.gateway.static_dir,
        )
        return cfg, ctx
    network = Network(cfg.network.orgs, data_root=cfg.network.data_dir, auto_pump=True)
    keystore = Keystore(cfg.network.keystore_dir)
    for user in cfg.users:
        kp, _cert = network.ca.enroll(user.user_id, user.org_id, Role[user.role])
        keystore.put(user.user_id, kp)
    ctx = GatewayContext(
        network=network,
        vaults={},
        keystore=keystore,
        session_ttl_s=cfg.gateway.session_ttl_s,
        poll_interval_s=cfg.gateway.poll_interval_s,
        static_dir=cfg.gateway.static_dir,
    )
    for ch in cfg.channels:
        sig = network.ca.root_key.sign(
            network.create_channel_preimage(ch.channel_id, frozenset(ch.members), ch.threshold)
        )
        network.create_channel(sig, ch.channel_id, ch.members, ch.threshold)
        vault_dir = None
        if cfg.network.data_dir:
            vault_dir = os.path.join(cfg.network.data_dir, f"vault-{ch.channel_id}")
        ctx.vaults[ch.channel_id] = PacsVault(
            ch.channel_id,
            network,
            root_dir=vault_dir,
            ttl_seconds=cfg.network.token_ttl_s,
            client_resolver=ctx.client_for,
        )
        if ch.keywords:
            admins = [u for u in cfg.users if Role[u.role] == Role.SITE_ADMIN]
            if admins:
                client = ctx.client_for(admins[0].user_id)
                if client is not None:
                    client.configure_keywords(ch.channel_id, ch.keywords)
    return cfg, ctx


def _gateway(args: argparse.Namespace) -> int:
    import uvicorn

    from .gateway import build_app

    cfg, ctx = _build_gateway_context(args)
    app = build_app(ctx)
    host = args.host or cfg.gateway.host
    port = args.port or cfg.gateway.port
    print(f"gateway listening on http://{host}:{port} (users: {', '.join(ctx.keystore.users())})")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def _node(args: argparse.Namespace) -> int:
    from .wire import PeerServer

    _cfg, ctx = _build_gateway_context(args)
    host, port = args.listen.rsplit(":", 1)
    peer = next(iter(ctx.network.peers.values()))
    if args.peer:
        peer = ctx.network.peers[args.peer]
    server = PeerServer(peer, host, int(port))
    server.start()
    print(f"peer {peer.peer_id} serving endorsement/delivery on {server.address}")
    try:
        import time

        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


def _orderer(args: argparse.Namespace) -> int:
    from .wire import OrdererServer, TcpReplicator

    _cfg, ctx = _build_gateway_context(args)
    host, port = args.listen.rsplit(":", 1)
    peer_addresses = []
    for addr in (args.peers or "").split(","):
        if addr:
            h, p = addr.rsplit(":", 1)
            peer_addresses.append((h, int(p)))
    replicator = TcpReplicator(ctx.network.orderer, peer_addresses)
    server = OrdererServer(ctx.network.orderer, replicator, host, int(port))
    server.start()
    print(f"orderer serving on {server.address}, replicating to {peer_addresses}")
    try:
        import time

        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


# --- client --------------------------------------------------------------------------


def _http(method: str, url: str, body=None, session=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, method=method)
    req.add_header("Content-Type", "application/json")
    if session:
        req.add_header("Authorization", f"Bearer {session}")
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read() or b"{}")
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read() or b"{}")


def _client(args: argparse.Namespace) -> int:
    from .identity import KeyPair

    base = args.gateway.rstrip("/")
    if args.action == "login":
        with open(args.key) as f:
            kp = KeyPair.from_seed(bytes.fromhex(f.read().strip()))
        _status, challenge = _http("POST", f"{base}/v1/login", {"user_id": args.user})
        nonce = challenge["nonce"]
        from .gateway import LOGIN_NONCE_PREFIX

        sig = kp.sign(LOGIN_NONCE_PREFIX + bytes.fromhex(nonce))
        status, session = _http(
            "POST",
            f"{base}/v1/login",
            {"user_id": args.user, "nonce": nonce, "signature": sig.hex()},
        )
        print(json.dumps(session, indent=2))
        return 0 if status == 200 else 1
    session = args.session
    if args.action == "worklist":
        status, body = _http("GET", f"{base}/v1/worklist", session=session)
    elif args.action == "request-access":
        status, body = _http(
            "POST",
            f"{base}/v1/access-requests",
            {"exam_id": args.exam, "reason": 0},
            session,
        )
    elif args.action == "view-link":
        status, body = _http("POST", f"{base}/v1/view-links", {"exam_id": args.exam}, session)
    elif args.action == "report":
        status, body = _http(
            "POST",
            f"{base}/v1/reports",
            {
                "exam_id": args.exam,
                "body_text": args.body or "",
                "impression_text": args.impression or "",
            },
            session,
        )
    elif args.action == "alerts":
        status, body = _http("GET", f"{base}/v1/alerts", session=session)
    elif args.action == "ack":
        status, body = _http("POST", f"{base}/v1/alerts/{args.alert}/ack", {}, session)
    elif args.action == "audit":
        status, body = _http("GET", f"{base}/v1/audit/exams/{args.exam}", session=session)
    else:
        print(f"unknown client action {args.action}", file=sys.stderr)
        return 2
    print(json.dumps(body, indent=2))
    return 0 if status < 400 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="radchain")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("sim", help="run the workflow simulation")
    p_sim.add_argument("--config", default=None)
    p_sim.add_argument("--workflow", choices=["baseline", "blockchain", "both"], default="both")
    p_sim.add_argument("--seed", type=int, default=7)
    p_sim.add_argument("--exams", type=int, default=None)
    p_sim.add_argument("--out", default="sim-out")
    p_sim.set_defaults(fn=_sim)

    p_gw = sub.add_parser("gateway", help="serve the HTTP gateway")
    p_gw.add_argument("--config", default=None)
    p_gw.add_argument("--host", default=None)
    p_gw.add_argument("--port", type=int, default=None)
    p_gw.set_defaults(fn=_gateway)

    p_node = sub.add_parser("node", help="serve one peer over TCP (demo)")
    p_node.add_argument("--config", default=None)
    p_node.add_argument("--listen", default="127.0.0.1:7051")
    p_node.add_argument("--peer", default=None)
    p_node.set_defaults(fn=_node)

    p_ord = sub.add_parser("orderer", help="serve the ordering service over TCP (demo)")
    p_ord.add_argument("--config", default=None)
    p_ord.add_argument("--listen", default="127.0.0.1:7050")
    p_ord.add_argument("--peers", default="")
    p_ord.set_defaults(fn=_orderer)

    p_cli = sub.add_parser("client", help="talk to a gateway")
    p_cli.add_argument("action", choices=[
        "login", "worklist", "request-access", "view-link", "report", "alerts", "ack", "audit",
    ])
    p_cli.add_argument("--gateway", default="http://127.0.0.1:8080")
    p_cli.add_argument("--user", default=None)
    p_cli.add_argument("--key", default=None, help="path to a hex seed file")
    p_cli.add_argument("--session", default=None)
    p_cli.add_argument("--exam", default=None)
    p_cli.add_argument("--alert", default=None)
    p_cli.add_argument("--body", default=None)
    p_cli.add_argument("--impression", default=None)
    p_cli.set_defaults(fn=_client)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
