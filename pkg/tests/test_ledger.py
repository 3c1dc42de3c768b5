import os
from random import Random

import pytest

from radchain.codec import U32_MAX, U64_MAX
from radchain.errors import CorruptBlockFile, EmptyBatch, UnknownChannel
from radchain.identity import (
    SYSTEM_CHANNEL,
    Action,
    CertificateAuthority,
    KeyPair,
    MembershipDirectory,
    Role,
)
from radchain.ledger import (
    ABSENT_VERSION,
    Block,
    ChannelLedger,
    ContractType,
    LedgerStore,
    ReadEntry,
    Transaction,
    TxDraft,
    TxFlag,
    Version,
    WriteEntry,
    compute_validity,
    rebuild_store,
)

from reference import (
    reference_validate,
    replay_state,
    sha256_reference,
    verify_chain_reference,
)

CHANNEL = "telerad"


class Env:
    """Single store driven directly (no network): identity mutations commit
    through the store's identity channel, app batches through append_block."""

    def __init__(self, root=None):
        self.ca = CertificateAuthority()
        self.store = LedgerStore(root, trust_anchor=self.ca.trust_anchor)
        self.ca.directory = self.store.directory
        self.store.register_channel(SYSTEM_CHANNEL, [CertificateAuthority.ORG_ID, "hospital-a"])
        self.store.register_channel(CHANNEL, ["hospital-a"])
        self.ca.committer = self._commit_identity
        self.ca.register_org("hospital-a")
        self.keys: dict[str, KeyPair] = {}
        for user, role in (
            ("site-admin", Role.SITE_ADMIN),
            ("rad-001", Role.RADIOLOGIST),
            ("staff-001", Role.SUPPORT_STAFF),
        ):
            kp, _ = self.ca.enroll(user, "hospital-a", role)
            self.keys[user] = kp

    def _commit_identity(self, operation, args):
        from radchain.contracts import ContractProcessor, StateView

        draft = TxDraft(
            SYSTEM_CHANNEL, ContractType.IDENTITY, operation, tuple(args),
            CertificateAuthority.ROOT_USER, 1_700_000_000,
        )
        view = StateView(self.store.channel(SYSTEM_CHANNEL))
        ContractProcessor(self.store.directory).execute(draft, view)
        tx = Transaction.assemble(draft, view.read_set(), view.write_set(), self.ca.root_key)
        self.store.append_block(SYSTEM_CHANNEL, [tx])

    def tx(self, writes, reads=(), creator="site-admin", operation="anchor_exam",
           tamper_signature=False) -> Transaction:
        draft = TxDraft(CHANNEL, ContractType.ANCHOR, operation,
                        (b"payload",), creator, 1_700_000_000)
        read_set = tuple(ReadEntry(k, Version(*v)) if not isinstance(v, Version) else ReadEntry(k, v)
                         for k, v in reads)
        write_set = tuple(WriteEntry(k, v) for k, v in writes)
        tx = Transaction.assemble(draft, read_set, write_set, self.keys[creator])
        if tamper_signature:
            sig = bytearray(tx.creator_signature)
            sig[0] ^= 1
            tx.creator_signature = bytes(sig)
        return tx


ABSENT = (U64_MAX, U32_MAX)


def test_genesis_block_has_zero_previous_hash():
    env = Env()
    block = env.store.append_block(CHANNEL, [env.tx([("k", b"v")])])
    assert block.header.height == 0
    assert block.header.previous_hash == b"\x00" * 32
    assert block.validity_flags == [TxFlag.VALID]


def test_empty_batch_rejected():
    env = Env()
    with pytest.raises(EmptyBatch):
        env.store.append_block(CHANNEL, [])


def test_stale_read_within_batch_discards_write():
    env = Env()
    tx1 = env.tx([("k", b"v1")], reads=[("k", ABSENT)])
    tx2 = env.tx([("k", b"v2")], reads=[("k", ABSENT)])
    block = env.store.append_block(CHANNEL, [tx1, tx2])
    assert block.validity_flags == [TxFlag.VALID, TxFlag.STALE_READ]
    value, version = env.store.query_state(CHANNEL, "k")
    assert value == b"v1" and version == Version(0, 0)
    # Oracle: sequential reference validator agrees.
    ref = reference_validate([tx1, tx2], CHANNEL, 0, {}, env.store.directory, None)
    assert ref == block.validity_flags


def test_independent_writes_both_valid():
    env = Env()
    block = env.store.append_block(
        CHANNEL, [env.tx([("a", b"1")]), env.tx([("b", b"2")])]
    )
    assert block.validity_flags == [TxFlag.VALID, TxFlag.VALID]
    assert env.store.query_state(CHANNEL, "a")[0] == b"1"
    assert env.store.query_state(CHANNEL, "b")[0] == b"2"


def test_bad_signature_and_unauthorized_flags():
    env = Env()
    bad_sig = env.tx([("x", b"1")], tamper_signature=True)
    wrong_role = env.tx([("y", b"2")], creator="rad-001", operation="anchor_exam")
    unknown = env.tx([("z", b"3")])
    unknown.creator = "ghost"
    block = env.store.append_block(CHANNEL, [bad_sig, wrong_role, unknown])
    assert block.validity_flags == [TxFlag.BAD_SIGNATURE, TxFlag.UNAUTHORIZED, TxFlag.UNAUTHORIZED]
    assert env.store.query_state(CHANNEL, "x") is None


def test_query_state_versions_and_absent():
    env = Env()
    env.store.append_block(CHANNEL, [env.tx([("k", b"v1")])])
    env.store.append_block(CHANNEL, [env.tx([("k", b"v2")], reads=[("k", (0, 0))])])
    value, version = env.store.query_state(CHANNEL, "k")
    assert value == b"v2" and version == Version(1, 0)
    assert env.store.query_state(CHANNEL, "missing") is None
    with pytest.raises(UnknownChannel):
        env.store.query_state("nope", "k")
    # Oracle: replaying the log reproduces the state.
    led = env.store.channel(CHANNEL)
    assert replay_state(led.blocks) == led.state


def test_history_excludes_invalid_writes():
    env = Env()
    env.store.append_block(CHANNEL, [env.tx([("k", b"v1")], reads=[("k", ABSENT)])])
    stale = env.tx([("k", b"v2")], reads=[("k", ABSENT)])
    env.store.append_block(CHANNEL, [stale])
    env.store.append_block(CHANNEL, [env.tx([("k", b"v3")], reads=[("k", (0, 0))])])
    history = env.store.get_history(CHANNEL, "k")
    assert [h.value for h in history] == [b"v1", b"v3"]
    assert [h.height for h in history] == [0, 2]
    assert env.store.get_history(CHANNEL, "never") == []


def test_verify_chain_in_memory_and_against_reference():
    env = Env()
    rng = Random(5)
    for i in range(100):
        writes = [(f"k{rng.randrange(20)}", bytes([i % 251]))]
        env.store.append_block(CHANNEL, [env.tx(writes)])
    assert env.store.verify_chain(CHANNEL).ok
    led = env.store.channel(CHANNEL)
    ok, _ = verify_chain_reference(led.blocks)
    assert ok
    # Reference hash implementation must agree with the production one.
    assert sha256_reference(b"radchain") == __import__("hashlib").sha256(b"radchain").digest()


def test_verify_chain_detects_tampered_block_42(tmp_path):
    env = Env(root=str(tmp_path / "node"))
    for i in range(60):
        env.store.append_block(CHANNEL, [env.tx([(f"k{i}", b"v")])])
    path = env.store._chain_path(CHANNEL)
    data = bytearray(open(path, "rb").read())
    # Locate record 42 and flip one byte inside its payload.
    pos = 0
    for record in range(42):
        length = int.from_bytes(data[pos:pos + 4], "big")
        pos += 4 + length + 4
    length = int.from_bytes(data[pos:pos + 4], "big")
    data[pos + 4 + length // 2] ^= 0x10
    with open(path, "wb") as f:
        f.write(data)
    check = env.store.verify_chain(CHANNEL)
    assert not check.ok and check.corrupt_height == 42


def test_verify_empty_chain_ok():
    env = Env()
    assert env.store.verify_chain(CHANNEL).ok


def test_rebuild_matches_pre_shutdown_state(tmp_path):
    root = str(tmp_path / "node")
    env = Env(root=root)
    rng = Random(11)
    for i in range(30):
        reads = []
        key = f"k{rng.randrange(8)}"
        current = env.store.query_state(CHANNEL, key)
        reads.append((key, tuple(current[1]) if current else ABSENT))
        env.store.append_block(CHANNEL, [env.tx([(key, bytes([i]))], reads=reads)])
    before = env.store.canonical_state_bytes(CHANNEL)

    # Process restart: everything reconstructed from disk alone.
    reopened = rebuild_store(root)
    rebuilt = reopened.channel(CHANNEL)
    assert rebuilt.canonical_state_bytes() == before
    assert replay_state(rebuilt.blocks) == rebuilt.state


def test_rebuild_empty_store(tmp_path):
    env = Env(root=str(tmp_path / "node"))
    rebuilt = env.store.rebuild_state(CHANNEL)
    assert rebuilt.height == 0
    assert rebuilt.canonical_state_bytes() == ChannelLedger(CHANNEL).canonical_state_bytes()


def test_truncated_final_record_detected(tmp_path):
    env = Env(root=str(tmp_path / "node"))
    for i in range(5):
        env.store.append_block(CHANNEL, [env.tx([(f"k{i}", b"v")])])
    path = env.store._chain_path(CHANNEL)
    size = os.path.getsize(path)
    with open(path, "r+b") as f:
        f.truncate(size - 3)
    check = env.store.verify_chain(CHANNEL)
    assert not check.ok and check.corrupt_height == 4
    with pytest.raises(CorruptBlockFile):
        env.store.rebuild_state(CHANNEL)


def test_heights_dense_and_append_only():
    env = Env()
    hashes = []
    for i in range(10):
        block = env.store.append_block(CHANNEL, [env.tx([(f"k{i}", b"v")])])
        hashes.append(block.header.block_hash)
    led = env.store.channel(CHANNEL)
    assert [b.header.height for b in led.blocks] == list(range(10))
    for i in range(1, 10):
        assert led.blocks[i].header.previous_hash == hashes[i - 1]


def test_block_encoding_round_trip():
    env = Env()
    block = env.store.append_block(
        CHANNEL,
        [env.tx([("a", b"1")], reads=[("a", ABSENT)]), env.tx([("b", b"2")])],
    )
    decoded = Block.decode(block.encode())
    assert decoded.encode() == block.encode()
    assert decoded.header == block.header
    assert decoded.validity_flags == block.validity_flags
    assert [t.tx_id for t in decoded.transactions] == [t.tx_id for t in block.transactions]


def test_validator_agreement_randomized():
    # Stated scale: production and reference validators agree on 10,000
    # randomized batches. Transactions come from a pre-signed pool; states,
    # batch composition and order vary per trial.
    env = Env()
    rng = Random(77)
    keys = [f"k{i}" for i in range(6)]
    pool = []
    for i in range(120):
        creator = rng.choice(["site-admin", "rad-001", "staff-001"])
        op = rng.choice(["anchor_exam", "request_access", "submit_report"])
        writes = [(rng.choice(keys), bytes([i % 250]))]
        reads = [(rng.choice(keys), rng.choice([ABSENT, (0, 0), (1, 0), (2, 1)]))]
        pool.append(env.tx(writes, reads=reads, creator=creator, operation=op,
                           tamper_signature=rng.random() < 0.1))
    for trial in range(10_000):
        batch = [rng.choice(pool) for _ in range(rng.randint(1, 5))]
        committed = {
            rng.choice(keys): Version(rng.randrange(3), rng.randrange(2))
            for _ in range(rng.randint(0, 4))
        }
        height = rng.randrange(5)
        production = compute_validity(
            batch, CHANNEL, height, lambda k: committed.get(k, ABSENT_VERSION),
            env.store.directory, None,
        )
        reference = reference_validate(
            batch, CHANNEL, height, committed, env.store.directory, None
        )
        assert production == reference


def test_block_file_record_framing_bit_exact(tmp_path):
    import zlib

    env = Env(root=str(tmp_path / "node"))
    block = env.store.append_block(CHANNEL, [env.tx([("k", b"v")])])
    with open(env.store._chain_path(CHANNEL), "rb") as f:
        data = f.read()
    payload = block.encode()
    expected = (
        len(payload).to_bytes(4, "big") + payload + zlib.crc32(payload).to_bytes(4, "big")
    )
    assert data == expected


def test_every_identity_mutation_is_exactly_one_transaction():
    from radchain.network import Network

    net = Network({"hospital-a": 1})
    mutations = 0
    for i in range(5):
        net.ca.enroll(f"u{i}", "hospital-a", Role.SUPPORT_STAFF)
        mutations += 1
    net.ca.revoke(net.ca.root_revoke_sig("u0"), "u0")
    mutations += 1
    led = net.ca_peer.store.channel(SYSTEM_CHANNEL)
    tx_count = sum(len(b.transactions) for b in led.blocks)
    assert tx_count == mutations
    assert all(f == TxFlag.VALID for b in led.blocks for f in b.validity_flags)


def test_identity_channel_replay_with_revocation(tmp_path):
    from radchain.network import Network

    root = str(tmp_path / "net")
    net = Network({"hospital-a": 1}, data_root=root)
    kp, _ = net.ca.enroll("rad-001", "hospital-a", Role.RADIOLOGIST)
    net.ca.revoke(net.ca.root_revoke_sig("rad-001"), "rad-001")
    peer = next(p for p in net.peers.values() if p.org_id == "hospital-a")
    store = peer.store
    assert store.directory.cert_at("rad-001").revoked
    rebuilt = rebuild_store(store.root_dir)
    assert rebuilt.directory.cert_at("rad-001").revoked
    assert rebuilt.channel(SYSTEM_CHANNEL).canonical_state_bytes() == store.channel(
        SYSTEM_CHANNEL
    ).canonical_state_bytes()
