"""Hash-chained block store with an append-only transaction log and a derived
key-value world state, one chain per channel.

Every persisted byte is integrity-checked: records carry a CRC32, headers are
hash-linked, and validity flags are recomputed on replay. Validation is a pure
function of (prior channel state, identity snapshot, batch order), which is
what makes independently validating peers converge byte-for-byte.
"""

from __future__ import annotations

import hashlib
import os
import threading
import zlib
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

from . import codec
from .codec import Reader
from .errors import CorruptBlockFile, EmptyBatch, PersistenceFailure, UnknownChannel
from .identity import SYSTEM_CHANNEL, Action, KeyPair, MembershipDirectory, verify_bytes

HASH_SIZE = 32
GENESIS_PREVIOUS = b"\x00" * HASH_SIZE


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class ContractType(IntEnum):
    IDENTITY = 0
    ACCESS = 1
    REPORT = 2
    ANCHOR = 3


class TxFlag(IntEnum):
    VALID = 0
    STALE_READ = 1
    BAD_SIGNATURE = 2
    UNAUTHORIZED = 3


class Version(NamedTuple):
    height: int
    index: int


# Version recorded when a read observed an absent key.
ABSENT_VERSION = Version(codec.U64_MAX, codec.U32_MAX)


class ReadEntry(NamedTuple):
    key: str
    version: Version


class WriteEntry(NamedTuple):
    key: str
    value: bytes


# Maps contract operations to the role-matrix action checked at validation.
# evaluate_access is role-exempt: the decision logic is deterministic contract
# code and any valid unrevoked member identity may trigger it.
OP_ACTIONS: dict[str, Optional[Action]] = {
    "register_user": Action.REGISTER,
    "revoke_user": Action.REVOKE,
    "anchor_exam": Action.INGEST_STUDY,
    "request_access": Action.REQUEST_ACCESS,
    "evaluate_access": None,
    "record_token_issue": Action.VIEW_IMAGES,
    "record_image_fetch": Action.VIEW_IMAGES,
    "submit_report": Action.SUBMIT_REPORT,
    "acknowledge_alert": Action.ACK_ALERT,
    "configure_keywords": Action.CONFIGURE_KEYWORDS,
}

# request_access is matrix-gated for radiologists but must also admit the
# referring physician, whose role carries VIEW_IMAGES instead.
_REQUEST_ACCESS_FALLBACK = Action.VIEW_IMAGES


def _encode_read_entry(entry: ReadEntry) -> bytes:
    return codec.string(entry.key) + codec.u64(entry.version.height) + codec.u32(entry.version.index)


def _decode_read_entry(r: Reader) -> ReadEntry:
    return ReadEntry(r.string(), Version(r.u64(), r.u32()))


def _encode_write_entry(entry: WriteEntry) -> bytes:
    return codec.string(entry.key) + codec.var_bytes(entry.value)


def _decode_write_entry(r: Reader) -> WriteEntry:
    return WriteEntry(r.string(), r.var_bytes())


@dataclass(frozen=True)
class TxDraft:
    """Unsigned transaction draft: what a client proposes for endorsement."""

    channel_id: str
    contract: ContractType
    operation: str
    args: tuple[bytes, ...]
    creator: str
    proposal_time: int

    def canonical(self) -> bytes:
        return b"".join(
            (
                codec.string(self.channel_id),
                codec.u8(int(self.contract)),
                codec.string(self.operation),
                codec.sequence(self.args, codec.var_bytes),
                codec.string(self.creator),
                codec.u64(self.proposal_time),
            )
        )


@dataclass
class Transaction:
    tx_id: bytes
    channel_id: str
    contract: ContractType
    operation: str
    args: tuple[bytes, ...]
    creator: str
    creator_signature: bytes
    read_set: tuple[ReadEntry, ...]
    write_set: tuple[WriteEntry, ...]
    proposal_time: int
    _body: Optional[bytes] = field(default=None, repr=False, compare=False)
    _encoded: Optional[bytes] = field(default=None, repr=False, compare=False)

    def body_bytes(self) -> bytes:
        """Signing/tx_id preimage: every field except tx_id and the signature."""
        if self._body is None:
            self._body = b"".join(
                (
                    codec.string(self.channel_id),
                    codec.u8(int(self.contract)),
                    codec.string(self.operation),
                    codec.sequence(self.args, codec.var_bytes),
                    codec.string(self.creator),
                    codec.sequence(self.read_set, _encode_read_entry),
                    codec.sequence(self.write_set, _encode_write_entry),
                    codec.u64(self.proposal_time),
                )
            )
        return self._body

    def encode(self) -> bytes:
        if self._encoded is None:
            self._encoded = b"".join(
                (
                    codec.fixed_bytes(self.tx_id, HASH_SIZE),
                    codec.string(self.channel_id),
                    codec.u8(int(self.contract)),
                    codec.string(self.operation),
                    codec.sequence(self.args, codec.var_bytes),
                    codec.string(self.creator),
                    codec.fixed_bytes(self.creator_signature, 64),
                    codec.sequence(self.read_set, _encode_read_entry),
                    codec.sequence(self.write_set, _encode_write_entry),
                    codec.u64(self.proposal_time),
                )
            )
        return self._encoded

    @classmethod
    def decode_from(cls, r: Reader) -> "Transaction":
        return cls(
            tx_id=r.fixed_bytes(HASH_SIZE),
            channel_id=r.string(),
            contract=ContractType(r.u8()),
            operation=r.string(),
            args=tuple(r.sequence(lambda rr: rr.var_bytes())),
            creator=r.string(),
            creator_signature=r.fixed_bytes(64),
            read_set=tuple(r.sequence(_decode_read_entry)),
            write_set=tuple(r.sequence(_decode_write_entry)),
            proposal_time=r.u64(),
        )

    @classmethod
    def assemble(
        cls,
        draft: TxDraft,
        read_set: Sequence[ReadEntry],
        write_set: Sequence[WriteEntry],
        signer: KeyPair,
    ) -> "Transaction":
        tx = cls(
            tx_id=b"",
            channel_id=draft.channel_id,
            contract=draft.contract,
            operation=draft.operation,
            args=draft.args,
            creator=draft.creator,
            creator_signature=b"",
            read_set=tuple(read_set),
            write_set=tuple(write_set),
            proposal_time=draft.proposal_time,
        )
        body = tx.body_bytes()
        tx.tx_id = sha256(body)
        tx.creator_signature = signer.sign(body)
        return tx


def encode_tx_sequence(txs: Sequence[Transaction]) -> bytes:
    return codec.u32(len(txs)) + b"".join(tx.encode() for tx in txs)


@dataclass(frozen=True)
class BlockHeader:
    height: int
    previous_hash: bytes
    data_hash: bytes
    block_hash: bytes

    @classmethod
    def build(cls, height: int, previous_hash: bytes, data_hash: bytes) -> "BlockHeader":
        return cls(height, previous_hash, data_hash, compute_block_hash(height, previous_hash, data_hash))

    def encode(self) -> bytes:
        return (
            codec.u64(self.height)
            + codec.fixed_bytes(self.previous_hash, HASH_SIZE)
            + codec.fixed_bytes(self.data_hash, HASH_SIZE)
            + codec.fixed_bytes(self.block_hash, HASH_SIZE)
        )


def compute_block_hash(height: int, previous_hash: bytes, data_hash: bytes) -> bytes:
    return sha256(codec.u64(height) + previous_hash + data_hash)


@dataclass
class Block:
    header: BlockHeader
    # Height of the identity chain this block was ordered against; validation
    # looks certificates up "as of" this snapshot so all peers agree. Covered
    # by the block-file CRC, not by the header hashes (those preimages are
    # fixed by the wire contract).
    identity_height: int
    transactions: list[Transaction]
    validity_flags: list[TxFlag]

    def encode(self) -> bytes:
        return (
            self.header.encode()
            + codec.u64(self.identity_height)
            + encode_tx_sequence(self.transactions)
            + codec.sequence(self.validity_flags, lambda f: codec.u8(int(f)))
        )

    @classmethod
    def decode(cls, buf: bytes) -> "Block":
        r = Reader(buf)
        header = BlockHeader(
            height=r.u64(),
            previous_hash=r.fixed_bytes(HASH_SIZE),
            data_hash=r.fixed_bytes(HASH_SIZE),
            block_hash=r.fixed_bytes(HASH_SIZE),
        )
        identity_height = r.u64()
        txs = r.sequence(Transaction.decode_from)
        flags = [TxFlag(v) for v in r.sequence(lambda rr: rr.u8())]
        r.expect_end()
        return cls(header, identity_height, txs, flags)


@dataclass(frozen=True)
class ChainCheck:
    ok: bool
    corrupt_height: Optional[int] = None

    def __bool__(self) -> bool:
        return self.ok


CHAIN_OK = ChainCheck(True)


class HistoryEntry(NamedTuple):
    tx_id: bytes
    value: bytes
    height: int


# --- validation ---------------------------------------------------------------

def action_for_operation(operation: str) -> Optional[Action]:
    return OP_ACTIONS.get(operation)


def compute_validity(
    txs: Sequence[Transaction],
    channel_id: str,
    height: int,
    get_committed_version: Callable[[str], Version],
    directory: MembershipDirectory,
    identity_height: Optional[int],
) -> list[TxFlag]:
    """Reference-grade sequential validation: signature, authorization against
    the identity snapshot, then read-set freshness against state-so-far."""
    overlay: dict[str, Version] = {}
    flags: list[TxFlag] = []
    for idx, tx in enumerate(txs):
        cert = directory.cert_at(tx.creator, identity_height)
        if cert is None:
            flag = TxFlag.UNAUTHORIZED
        elif not verify_bytes(cert.public_key, tx.body_bytes(), tx.creator_signature):
            flag = TxFlag.BAD_SIGNATURE
        else:
            flag = TxFlag.VALID
            action = action_for_operation(tx.operation)
            decision = directory.authorize(tx.creator, action, channel_id, identity_height)
            if not decision and tx.operation == "request_access":
                decision = directory.authorize(
                    tx.creator, _REQUEST_ACCESS_FALLBACK, channel_id, identity_height
                )
            if not decision:
                flag = TxFlag.UNAUTHORIZED
            else:
                for key, version in tx.read_set:
                    current = overlay.get(key)
                    if current is None:
                        current = get_committed_version(key)
                    if current != version:
                        flag = TxFlag.STALE_READ
                        break
        flags.append(flag)
        if flag == TxFlag.VALID:
            for key, _value in tx.write_set:
                overlay[key] = Version(height, idx)
    return flags


# --- single-channel chain -------------------------------------------------------

class ChannelLedger:
    """One channel's chain, world state, and history index.

    Single committer: all mutation happens under the channel lock; queries
    take it briefly and observe only pre- or post-commit states.
    """

    def __init__(self, channel_id: str, path: Optional[str] = None):
        self.channel_id = channel_id
        self.path = path
        self.blocks: list[Block] = []
        self.state: dict[str, tuple[bytes, Version]] = {}
        self.history: dict[str, list[HistoryEntry]] = {}
        self.tx_locations: dict[bytes, tuple[int, int, TxFlag]] = {}
        self.lock = threading.RLock()
        # Test hook: called after a block is persisted but before world state
        # updates, to exercise crash recovery.
        self.post_persist_hook: Optional[Callable[[Block], None]] = None

    # -- queries --

    @property
    def height(self) -> int:
        return len(self.blocks)

    def tip_hash(self) -> bytes:
        return self.blocks[-1].header.block_hash if self.blocks else GENESIS_PREVIOUS

    def committed_version(self, key: str) -> Version:
        entry = self.state.get(key)
        return entry[1] if entry else ABSENT_VERSION

    def query_state(self, key: str) -> Optional[tuple[bytes, Version]]:
        with self.lock:
            return self.state.get(key)

    def get_history(self, key: str) -> list[HistoryEntry]:
        with self.lock:
            return list(self.history.get(key, ()))

    def keys_with_prefix(self, prefix: str) -> list[str]:
        with self.lock:
            return sorted(k for k in self.state if k.startswith(prefix))

    def find_tx(self, tx_id: bytes) -> Optional[tuple[int, int, TxFlag]]:
        with self.lock:
            return self.tx_locations.get(tx_id)

    def canonical_state_bytes(self) -> bytes:
        with self.lock:
            items = sorted(self.state.items())
        parts = [codec.u32(len(items))]
        for key, (value, version) in items:
            parts.append(codec.string(key))
            parts.append(codec.var_bytes(value))
            parts.append(codec.u64(version.height))
            parts.append(codec.u32(version.index))
        return b"".join(parts)

    def canonical_chain_bytes(self) -> bytes:
        with self.lock:
            return b"".join(b.encode() for b in self.blocks)

    # -- commit path --

    def build_block(
        self, txs: Sequence[Transaction], identity_height: int
    ) -> Block:
        if not txs:
            raise EmptyBatch(self.channel_id)
        data_hash = sha256(encode_tx_sequence(txs))
        header = BlockHeader.build(self.height, self.tip_hash(), data_hash)
        return Block(header, identity_height, list(txs), [])

    def commit_block(
        self,
        block: Block,
        directory: MembershipDirectory,
        expected_flags: Optional[list[TxFlag]] = None,
    ) -> list[TxFlag]:
        """Validate and append a block whose header is already sealed.

        The caller guarantees height/previous-hash continuity; header hashes
        are recomputed here as a last line of defense.
        """
        with self.lock:
            header = block.header
            if header.height != self.height:
                raise ValueError(f"height {header.height} != tip {self.height}")
            if header.previous_hash != self.tip_hash():
                raise ValueError("previous_hash does not match tip")
            if sha256(encode_tx_sequence(block.transactions)) != header.data_hash:
                raise ValueError("data_hash mismatch")
            if compute_block_hash(header.height, header.previous_hash, header.data_hash) != header.block_hash:
                raise ValueError("block_hash mismatch")

            flags = compute_validity(
                block.transactions,
                self.channel_id,
                header.height,
                self.committed_version,
                directory,
                block.identity_height,
            )
            if expected_flags is not None and flags != expected_flags:
                raise ValueError("validity flags do not replay")
            committed = Block(header, block.identity_height, block.transactions, flags)

            self._persist(committed)
            if self.post_persist_hook is not None:
                self.post_persist_hook(committed)
            self._apply(committed)
            return flags

    def _apply(self, block: Block) -> None:
        h = block.header.height
        for idx, (tx, flag) in enumerate(zip(block.transactions, block.validity_flags)):
            self.tx_locations[tx.tx_id] = (h, idx, flag)
            if flag != TxFlag.VALID:
                continue
            version = Version(h, idx)
            for key, value in tx.write_set:
                self.state[key] = (value, version)
                self.history.setdefault(key, []).append(HistoryEntry(tx.tx_id, value, h))
        self.blocks.append(block)

    def _persist(self, block: Block) -> None:
        if self.path is None:
            return
        payload = block.encode()
        record = codec.u32(len(payload)) + payload + codec.u32(zlib.crc32(payload))
        try:
            with open(self.path, "ab") as f:
                offset = f.tell()
                try:
                    f.write(record)
                    f.flush()
                    os.fsync(f.fileno())
                except OSError:
                    f.truncate(offset)
                    raise
        except OSError as exc:
            raise PersistenceFailure(f"{self.path}: {exc}") from exc

    # -- verification --

    def verify_chain(self) -> ChainCheck:
        if self.path is not None and os.path.exists(self.path):
            return verify_chain_file(self.path)
        with self.lock:
            blocks = list(self.blocks)
        prev = GENESIS_PREVIOUS
        for i, block in enumerate(blocks):
            if not _block_hashes_ok(block, i, prev):
                return ChainCheck(False, i)
            prev = block.header.block_hash
        return CHAIN_OK


def _block_hashes_ok(block: Block, expected_height: int, expected_prev: bytes) -> bool:
    header = block.header
    if header.height != expected_height or header.previous_hash != expected_prev:
        return False
    if sha256(encode_tx_sequence(block.transactions)) != header.data_hash:
        return False
    return compute_block_hash(header.height, header.previous_hash, header.data_hash) == header.block_hash


def iter_block_records(path: str):
    """Yield (record_index, offset, payload) for each framed record.

    Raises CorruptBlockFile on any framing or CRC violation; CRC32 catches
    every single-bit corruption of the persisted bytes.
    """
    with open(path, "rb") as f:
        data = f.read()
    pos = 0
    index = 0
    total = len(data)
    while pos < total:
        start = pos
        if pos + 4 > total:
            raise CorruptBlockFile(start, "truncated length prefix")
        length = int.from_bytes(data[pos:pos + 4], "big")
        pos += 4
        if pos + length + 4 > total:
            raise CorruptBlockFile(start, "truncated record")
        payload = data[pos:pos + length]
        pos += length
        crc = int.from_bytes(data[pos:pos + 4], "big")
        pos += 4
        if zlib.crc32(payload) != crc:
            raise CorruptBlockFile(start, "CRC mismatch")
        yield index, start, payload
        index += 1


def verify_chain_file(path: str) -> ChainCheck:
    prev = GENESIS_PREVIOUS
    height = 0
    try:
        for index, _offset, payload in iter_block_records(path):
            try:
                block = Block.decode(payload)
            except codec.DecodeError:
                return ChainCheck(False, index)
            if not _block_hashes_ok(block, index, prev):
                return ChainCheck(False, index)
            prev = block.header.block_hash
            height = index + 1
    except CorruptBlockFile:
        return ChainCheck(False, height)
    return CHAIN_OK


# --- multi-channel store ----------------------------------------------------------

class LedgerStore:
    """All chains one node holds, plus the identity replica derived from the
    system channel. Channel metadata (orgs, members) persists alongside the
    block files so a store rebuilds from disk alone.
    """

    def __init__(self, root_dir: Optional[str] = None, trust_anchor=None):
        self.root_dir = root_dir
        if root_dir:
            os.makedirs(root_dir, exist_ok=True)
        self.directory = MembershipDirectory()
        self.trust_anchor = trust_anchor
        if trust_anchor is not None:
            self.directory.seed_trust_anchor(trust_anchor)
            if root_dir:
                self._write_file("trust_anchor.cert", trust_anchor.encode())
        self.channels: dict[str, ChannelLedger] = {}
        self.channel_members: dict[str, frozenset[str]] = {}

    # -- setup --

    def _chain_path(self, channel_id: str) -> Optional[str]:
        if self.root_dir is None:
            return None
        return os.path.join(self.root_dir, f"{channel_id}.chain")

    def _write_file(self, name: str, data: bytes) -> None:
        assert self.root_dir is not None
        tmp = os.path.join(self.root_dir, name + ".tmp")
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, os.path.join(self.root_dir, name))

    def register_org(self, org_id: str) -> None:
        self.directory.register_org(org_id)
        self._persist_meta()

    def register_channel(self, channel_id: str, member_orgs: Iterable[str]) -> None:
        members = frozenset(member_orgs)
        self.channel_members[channel_id] = members
        for org in members:
            self.directory.register_org(org)
            if channel_id != SYSTEM_CHANNEL:
                self.directory.add_org_channel(org, channel_id)
        if channel_id not in self.channels:
            self.channels[channel_id] = ChannelLedger(channel_id, self._chain_path(channel_id))
        self._persist_meta()

    def _persist_meta(self) -> None:
        if self.root_dir is None:
            return
        import json

        meta = {
            "orgs": sorted(self.directory.org_channels),
            "channels": {
                cid: sorted(members) for cid, members in sorted(self.channel_members.items())
            },
        }
        self._write_file("channels.json", json.dumps(meta, indent=1).encode())

    def channel(self, channel_id: str) -> ChannelLedger:
        led = self.channels.get(channel_id)
        if led is None:
            raise UnknownChannel(channel_id)
        return led

    def has_channel(self, channel_id: str) -> bool:
        return channel_id in self.channels

    @property
    def identity_height(self) -> int:
        led = self.channels.get(SYSTEM_CHANNEL)
        return led.height if led else 0

    # -- commit paths --

    def append_block(self, channel_id: str, ordered_txs: Sequence[Transaction]) -> Block:
        """Cut and commit in one step (single-node path and direct tests);
        stamps the current identity tip."""
        led = self.channel(channel_id)
        with led.lock:
            stamp = led.height if channel_id == SYSTEM_CHANNEL else self.identity_height
            block = led.build_block(ordered_txs, stamp)
            flags = led.commit_block(block, self.directory)
            block.validity_flags = flags
            if channel_id == SYSTEM_CHANNEL:
                self._apply_identity_block(block)
            return led.blocks[-1]

    def commit_block(self, channel_id: str, block: Block) -> list[TxFlag]:
        """Commit a block delivered by the ordering service."""
        led = self.channel(channel_id)
        flags = led.commit_block(block, self.directory)
        if channel_id == SYSTEM_CHANNEL:
            self._apply_identity_block(led.blocks[-1])
        return flags

    def _apply_identity_block(self, block: Block) -> None:
        from .identity import EnrollmentCertificate

        h = block.header.height
        for tx, flag in zip(block.transactions, block.validity_flags):
            if flag != TxFlag.VALID:
                continue
            for _key, value in tx.write_set:
                cert = EnrollmentCertificate.decode(value)
                if tx.operation == "revoke_user":
                    self.directory.apply_revoke(cert, h)
                else:
                    self.directory.apply_issue(cert, h)

    # -- query surface --

    def query_state(self, channel_id: str, key: str):
        return self.channel(channel_id).query_state(key)

    def get_history(self, channel_id: str, key: str) -> list[HistoryEntry]:
        return self.channel(channel_id).get_history(key)

    def verify_chain(self, channel_id: str) -> ChainCheck:
        return self.channel(channel_id).verify_chain()

    def canonical_state_bytes(self, channel_id: str) -> bytes:
        return self.channel(channel_id).canonical_state_bytes()

    # -- rebuild --

    def rebuild_state(self, channel_id: str) -> ChannelLedger:
        """Reconstruct one channel from its persisted block file.

        Validity flags are recomputed during replay and must match the
        persisted ones. App channels replay against the identity chain first;
        height-parameterized certificate lookups give each block exactly the
        snapshot its stamp names, so the rebuilt state is byte-identical to a
        full replay from genesis.
        """
        if self.root_dir is None:
            raise PersistenceFailure("store has no persistence root")
        replay_dir, identity_ledger = self._replay_identity_chain()
        if channel_id == SYSTEM_CHANNEL:
            return identity_ledger
        path = self._chain_path(channel_id)
        assert path is not None
        members = self.channel_members.get(channel_id)
        if members:
            for org in members:
                replay_dir.register_org(org)
                replay_dir.add_org_channel(org, channel_id)
        led = ChannelLedger(channel_id, None)
        if not os.path.exists(path):
            return led
        for _index, offset, payload in iter_block_records(path):
            try:
                block = Block.decode(payload)
            except codec.DecodeError as exc:
                raise CorruptBlockFile(offset, str(exc)) from exc
            expected = list(block.validity_flags)
            fresh = Block(block.header, block.identity_height, block.transactions, [])
            try:
                led.commit_block(fresh, replay_dir, expected_flags=expected)
            except ValueError as exc:
                raise CorruptBlockFile(offset, str(exc)) from exc
        return led

    def _replay_identity_chain(self) -> tuple[MembershipDirectory, ChannelLedger]:
        from .identity import EnrollmentCertificate

        directory = MembershipDirectory()
        if self.trust_anchor is not None:
            directory.seed_trust_anchor(self.trust_anchor)
        for org in self.directory.org_channels:
            directory.register_org(org)
        led = ChannelLedger(SYSTEM_CHANNEL, None)
        path = self._chain_path(SYSTEM_CHANNEL)
        if path and os.path.exists(path):
            for _index, offset, payload in iter_block_records(path):
                try:
                    block = Block.decode(payload)
                except codec.DecodeError as exc:
                    raise CorruptBlockFile(offset, str(exc)) from exc
                expected = list(block.validity_flags)
                fresh = Block(block.header, block.identity_height, block.transactions, [])
                try:
                    led.commit_block(fresh, directory, expected_flags=expected)
                except ValueError as exc:
                    raise CorruptBlockFile(offset, str(exc)) from exc
                committed = led.blocks[-1]
                h = committed.header.height
                for tx, flag in zip(committed.transactions, committed.validity_flags):
                    if flag != TxFlag.VALID:
                        continue
                    for _key, value in tx.write_set:
                        cert = EnrollmentCertificate.decode(value)
                        if tx.operation == "revoke_user":
                            directory.apply_revoke(cert, h)
                        else:
                            directory.apply_issue(cert, h)
        return directory, led


def rebuild_store(root_dir: str) -> LedgerStore:
    """Open a persisted store: metadata, trust anchor, then every chain."""
    import json

    from .identity import EnrollmentCertificate

    anchor = None
    anchor_path = os.path.join(root_dir, "trust_anchor.cert")
    if os.path.exists(anchor_path):
        with open(anchor_path, "rb") as f:
            anchor = EnrollmentCertificate.decode(f.read())
    store = LedgerStore(root_dir, trust_anchor=anchor)
    meta_path = os.path.join(root_dir, "channels.json")
    if os.path.exists(meta_path):
        with open(meta_path) as f:
            meta = json.load(f)
        for org in meta.get("orgs", ()):
            store.directory.register_org(org)
        for cid, members in meta.get("channels", {}).items():
            store.register_channel(cid, members)
    order = sorted(store.channels, key=lambda c: (c != SYSTEM_CHANNEL, c))
    for cid in order:
        rebuilt = store.rebuild_state(cid)
        live = store.channels[cid]
        live.blocks = rebuilt.blocks
        live.state = rebuilt.state
        live.history = rebuilt.history
        live.tx_locations = rebuilt.tx_locations
        if cid == SYSTEM_CHANNEL:
            for block in live.blocks:
                store._apply_identity_block(block)
    return store
