import hashlib
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from radchain.contracts import ExamRecord
from radchain.identity import KeyPair, Role
from radchain.network import ChainClient, Network

CHANNEL = "telerad"


@dataclass
class Bundle:
    net: Network
    channel: str
    clients: dict[str, ChainClient] = field(default_factory=dict)
    keys: dict[str, KeyPair] = field(default_factory=dict)

    def client(self, user_id: str) -> ChainClient:
        return self.clients[user_id]


def make_bundle(data_root=None, bus=None, orgs=None, threshold=1, clock=time.time,
                channel_orgs=None) -> Bundle:
    orgs = orgs or {"hospital-a": 1, "telerad-practice": 1}
    channel_orgs = channel_orgs or [o for o in orgs if o in ("hospital-a", "telerad-practice")]
    net = Network(orgs, data_root=data_root, bus=bus, clock=clock, auto_pump=True)
    bundle = Bundle(net=net, channel=CHANNEL)

    def enroll(user_id, org_id, role):
        kp, _ = net.ca.enroll(user_id, org_id, role)
        bundle.keys[user_id] = kp
        bundle.clients[user_id] = net.client(user_id, kp)

    enroll("site-admin", "hospital-a", Role.SITE_ADMIN)
    enroll("gw-svc", "hospital-a", Role.SUPPORT_STAFF)
    enroll("rad-001", "telerad-practice", Role.RADIOLOGIST)
    enroll("rad-002", "telerad-practice", Role.RADIOLOGIST)
    enroll("phy-001", "hospital-a", Role.PHYSICIAN)
    enroll("staff-001", "hospital-a", Role.SUPPORT_STAFF)

    sig = net.ca.root_key.sign(
        net.create_channel_preimage(CHANNEL, frozenset(channel_orgs), threshold)
    )
    net.create_channel(sig, CHANNEL, channel_orgs, threshold)
    return bundle


@pytest.fixture
def bundle() -> Bundle:
    return make_bundle()


def make_exam(exam_id="EX-1", n_hashes=3, org="hospital-a", physician="phy-001",
              created_at=None) -> ExamRecord:
    hashes = tuple(
        hashlib.sha256(f"{exam_id}:{i}".encode()).digest() for i in range(n_hashes)
    )
    return ExamRecord(
        exam_id=exam_id,
        org_id=org,
        modality="CT",
        referring_physician=physician,
        image_hashes=hashes,
        image_count=n_hashes,
        prior_exam_ids=(),
        created_at=int(created_at if created_at is not None else time.time()),
    )
