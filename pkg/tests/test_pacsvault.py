import hashlib
from random import Random

import pytest

from radchain.contracts import AccessReason, ExamRecord, exam_key
from radchain.errors import (
    AnchorRejected,
    ExpiredToken,
    HashMismatch,
    IntegrityFailure,
    NoGrant,
    UnknownExam,
    UnknownToken,
)
from radchain.pacsvault import PacsVault, StudyBlob, StudyImage, synthetic_study

from conftest import CHANNEL, make_bundle


class FakeClock:
    def __init__(self, start=1_700_000_000.0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += seconds


@pytest.fixture
def env(tmp_path):
    bundle = make_bundle()
    clock = FakeClock()
    vault = PacsVault(
        CHANNEL,
        bundle.net,
        root_dir=str(tmp_path / "vault"),
        clock=clock,
        ttl_seconds=900,
        client_resolver=bundle.clients.get,
    )
    return bundle, vault, clock


def _grant(bundle, exam_id, user="rad-001"):
    request_id, _ = bundle.client(user).request_access(
        CHANNEL, exam_id, AccessReason.INTERPRETATION
    )
    bundle.client("gw-svc").evaluate_access(CHANNEL, request_id)


def test_ingest_persists_and_anchors(env):
    bundle, vault, _clock = env
    blob = synthetic_study("EX-1", 3, 3, Random(1))
    vault.ingest_study(bundle.client("site-admin"), blob, "CT", "phy-001")
    assert vault.has_study("EX-1")
    entry = bundle.client("rad-001").query_state(CHANNEL, exam_key(CHANNEL, "EX-1"))
    record = ExamRecord.decode(entry[0])
    assert record.image_count == 3
    assert record.image_hashes == tuple(img.content_hash for img in blob.images)


def test_ingest_hash_mismatch_nothing_persisted(env):
    bundle, vault, _clock = env
    blob = synthetic_study("EX-1", 2, 2, Random(2))
    images = list(blob.images)
    images[1] = StudyImage(images[1].instance_id, images[1].content_hash, images[1].pixel_bytes + b"x")
    bad = StudyBlob("EX-1", tuple(images), 2)
    with pytest.raises(HashMismatch) as err:
        vault.ingest_study(bundle.client("site-admin"), bad, "CT", "phy-001")
    assert err.value.instance_id == images[1].instance_id
    assert not vault.has_study("EX-1")
    assert bundle.client("rad-001").query_state(CHANNEL, exam_key(CHANNEL, "EX-1")) is None


def test_ingest_anchor_rejection_rolls_back(env):
    bundle, vault, _clock = env
    blob = synthetic_study("EX-1", 2, 2, Random(3))
    with pytest.raises(AnchorRejected):
        # Radiologists may not anchor exams.
        vault.ingest_study(bundle.client("rad-001"), blob, "CT", "phy-001")
    assert not vault.has_study("EX-1")


def test_incomplete_study_queryable(env):
    bundle, vault, _clock = env
    blob = synthetic_study("EX-1", 17, 20, Random(4))
    vault.ingest_study(bundle.client("site-admin"), blob, "MR", "phy-001")
    completeness = vault.check_completeness("EX-1")
    # Oracle: plain count comparison.
    assert completeness.missing == 20 - 17
    assert not completeness.complete


def test_complete_study(env):
    bundle, vault, _clock = env
    vault.ingest_study(bundle.client("site-admin"), synthetic_study("EX-1", 5, 5, Random(5)), "CT", "phy-001")
    assert vault.check_completeness("EX-1").complete
    with pytest.raises(UnknownExam):
        vault.check_completeness("EX-404")


def test_token_requires_grant(env):
    bundle, vault, _clock = env
    vault.ingest_study(bundle.client("site-admin"), synthetic_study("EX-1", 2, 2, Random(6)), "CT", "phy-001")
    led = bundle.net.peer_for_channel(CHANNEL).store.channel(CHANNEL)
    height_before = led.height
    with pytest.raises(NoGrant):
        vault.issue_view_token("rad-001", "EX-1")
    assert led.height == height_before  # no transaction committed
    with pytest.raises(UnknownExam):
        vault.issue_view_token("rad-001", "EX-404")


def test_token_issue_and_fetch_recorded(env):
    bundle, vault, _clock = env
    vault.ingest_study(bundle.client("site-admin"), synthetic_study("EX-1", 2, 2, Random(7)), "CT", "phy-001")
    _grant(bundle, "EX-1")
    token = vault.issue_view_token("rad-001", "EX-1")
    assert token.view_url() == f"/v1/images/EX-1?token={token.token_hex}"
    assert len(token.token_hex) == 64
    led = bundle.net.peer_for_channel(CHANNEL).store.channel(CHANNEL)
    assert led.query_state(f"access/{CHANNEL}/{token.token_id}") is not None

    images = vault.fetch_images(token.token_hex)
    assert len(images) == 2
    assert token.consumed_count == 1
    assert led.query_state(f"fetch/{CHANNEL}/{token.token_id}/0") is not None
    vault.fetch_images(token.token_hex)
    assert token.consumed_count == 2
    assert led.query_state(f"fetch/{CHANNEL}/{token.token_id}/1") is not None


def test_fetch_expiry_boundary(env):
    bundle, vault, clock = env
    vault.ingest_study(bundle.client("site-admin"), synthetic_study("EX-1", 2, 2, Random(8)), "CT", "phy-001")
    _grant(bundle, "EX-1")
    token = vault.issue_view_token("rad-001", "EX-1")
    clock.advance(899.0)
    assert len(vault.fetch_images(token.token_hex)) == 2
    clock.advance(2.0)  # now = issued_at + 901 > ttl
    with pytest.raises(ExpiredToken):
        vault.fetch_images(token.token_hex)
    # TTL monotonicity: once expired, never accepted again.
    clock.advance(100.0)
    with pytest.raises(ExpiredToken):
        vault.fetch_images(token.token_hex)


def test_unknown_token(env):
    _bundle, vault, _clock = env
    with pytest.raises(UnknownToken):
        vault.fetch_images("ab" * 32)


def test_tampered_blob_detected(env):
    bundle, vault, _clock = env
    vault.ingest_study(bundle.client("site-admin"), synthetic_study("EX-1", 3, 3, Random(9)), "CT", "phy-001")
    _grant(bundle, "EX-1")
    token = vault.issue_view_token("rad-001", "EX-1")
    vault.tamper_study("EX-1", 1)
    with pytest.raises(IntegrityFailure) as err:
        vault.fetch_images(token.token_hex)
    assert err.value.instance_id == "EX-1.001"
    # Oracle: independent hash recomputation flags exactly that instance.
    blob = vault._load("EX-1")
    entry = bundle.client("rad-001").query_state(CHANNEL, exam_key(CHANNEL, "EX-1"))
    anchored = ExamRecord.decode(entry[0]).image_hashes
    mismatches = [
        img.instance_id
        for img, expected in zip(blob.images, anchored)
        if hashlib.sha256(img.pixel_bytes).digest() != expected
    ]
    assert mismatches == ["EX-1.001"]


def test_study_file_round_trip(tmp_path):
    bundle = make_bundle()
    vault_dir = str(tmp_path / "v")
    vault = PacsVault(CHANNEL, bundle.net, root_dir=vault_dir, client_resolver=bundle.clients.get)
    blob = synthetic_study("EX-1", 4, 6, Random(10))
    vault.ingest_study(bundle.client("site-admin"), blob, "CT", "phy-001")
    # A second vault instance over the same directory reads the same bytes.
    vault2 = PacsVault(CHANNEL, bundle.net, root_dir=vault_dir, client_resolver=bundle.clients.get)
    loaded = vault2._load("EX-1")
    assert loaded is not None
    assert [i.pixel_bytes for i in loaded.images] == [i.pixel_bytes for i in blob.images]
    assert vault2.check_completeness("EX-1").missing == 2


def test_exam_file_layout_bit_exact(tmp_path):
    from radchain import codec

    bundle = make_bundle()
    vault_dir = str(tmp_path / "v")
    vault = PacsVault(CHANNEL, bundle.net, root_dir=vault_dir, client_resolver=bundle.clients.get)
    blob = synthetic_study("EX-1", 2, 2, Random(11))
    vault.ingest_study(bundle.client("site-admin"), blob, "CT", "phy-001")
    expected = codec.u32(2)
    for image in blob.images:
        expected += codec.string(image.instance_id)
        expected += codec.u32(len(image.pixel_bytes))
        expected += image.pixel_bytes
    with open(f"{vault_dir}/EX-1.study", "rb") as f:
        assert f.read() == expected


def test_token_grant_join_randomized(env):
    bundle, vault, _clock = env
    rng = Random(12)
    admin = bundle.client("site-admin")
    led = bundle.net.peer_for_channel(CHANNEL).store.channel(CHANNEL)
    for i in range(6):
        vault.ingest_study(admin, synthetic_study(f"EX-{i}", 2, 2, rng), "CT", "phy-001")
        _grant(bundle, f"EX-{i}")
        token = vault.issue_view_token("rad-001", f"EX-{i}")
        for _ in range(rng.randint(1, 3)):
            vault.fetch_images(token.token_hex)
    # Every issued token maps to exactly one earlier grant.
    token_keys = led.keys_with_prefix(f"access/{CHANNEL}/")
    for key in token_keys:
        from radchain.contracts import TokenIssueRecord, grant_key

        record = TokenIssueRecord.decode(led.query_state(key)[0])
        grant_entry = led.query_state(grant_key(CHANNEL, record.exam_id, record.user_id))
        assert grant_entry is not None
        token_version = led.query_state(key)[1]
        assert grant_entry[1] < token_version
