"""Permissioned peer network: per-org peers endorsing proposals, a single
ordering service sequencing transactions into blocks, and channels partitioning
data between organizations.

Transports are pluggable: DirectBus delivers synchronously in-process;
ChaosBus replays the same traffic under seeded delays, drops and reordering
(virtual time) to exercise gap recovery and convergence. The TCP framing for
multi-process demos lives in wire.py with an identical message schema.
"""

from __future__ import annotations

import heapq
import secrets
import threading
import time
from dataclasses import dataclass, field
from enum import IntEnum
from random import Random
from typing import Callable, Iterable, Optional, Sequence

from .contracts import CONTRACT_FOR_OPERATION, ContractProcessor, StateView
from .errors import (
    Backpressure,
    BadThreshold,
    CommitFailed,
    ContractError,
    DuplicateChannel,
    InsufficientEndorsements,
    InvalidAdminSignature,
    MismatchedWriteSets,
    RadchainError,
    Unauthorized,
    UnknownChannel,
    UnknownOrg,
)
from .identity import (
    SYSTEM_CHANNEL,
    Action,
    CertificateAuthority,
    KeyPair,
    Role,
    verify_bytes,
)
from .ledger import (
    Block,
    BlockHeader,
    LedgerStore,
    ReadEntry,
    Transaction,
    TxDraft,
    TxFlag,
    WriteEntry,
    action_for_operation,
    compute_block_hash,
    encode_tx_sequence,
    sha256,
)
from . import codec


@dataclass(frozen=True)
class Channel:
    channel_id: str
    member_orgs: frozenset[str]
    endorsement_threshold: int


@dataclass(frozen=True)
class Proposal:
    draft: TxDraft
    signature: bytes


@dataclass(frozen=True)
class Endorsement:
    peer_id: str
    org_id: str
    read_set: tuple[ReadEntry, ...]
    write_set: tuple[WriteEntry, ...]
    signature: bytes

    @staticmethod
    def preimage(draft: TxDraft, read_set, write_set) -> bytes:
        from .ledger import _encode_read_entry, _encode_write_entry

        return (
            draft.canonical()
            + codec.sequence(read_set, _encode_read_entry)
            + codec.sequence(write_set, _encode_write_entry)
        )


class EndorseStatus(IntEnum):
    OK = 0
    NOT_JOINED = 1
    BAD_SIGNATURE = 2
    UNAUTHORIZED = 3
    CONTRACT_ERROR = 4


@dataclass
class EndorseOutcome:
    status: EndorseStatus
    endorsement: Optional[Endorsement] = None
    error: Optional[RadchainError] = None

    def raise_if_rejected(self) -> Endorsement:
        if self.status == EndorseStatus.OK:
            assert self.endorsement is not None
            return self.endorsement
        if self.error is not None:
            raise self.error
        raise Unauthorized(self.status.name)


@dataclass
class DeliverResult:
    committed: list[tuple[str, int]] = field(default_factory=list)
    gap_requests: list[tuple[str, int]] = field(default_factory=list)
    hash_mismatch: bool = False
    duplicate: bool = False


class Peer:
    """One organization's node: holds ledger replicas for its channels,
    endorses proposals by simulation, and commits delivered blocks."""

    def __init__(self, peer_id: str, org_id: str, org_key: KeyPair, store: LedgerStore):
        self.peer_id = peer_id
        self.org_id = org_id
        self.org_key = org_key
        self.store = store
        self.joined_channels: set[str] = set()
        self.processor = ContractProcessor(store.directory)
        # Out-of-order blocks waiting for their predecessors or for the
        # identity replica to reach their stamp.
        self._pending: dict[str, dict[int, Block]] = {}
        self._lock = threading.RLock()

    def join_channel(self, channel_id: str, member_orgs: Iterable[str]) -> None:
        self.store.register_channel(channel_id, member_orgs)
        self.joined_channels.add(channel_id)
        self._pending.setdefault(channel_id, {})

    def endorse(self, proposal: Proposal) -> EndorseOutcome:
        draft = proposal.draft
        if draft.channel_id not in self.joined_channels:
            return EndorseOutcome(
                EndorseStatus.NOT_JOINED,
                error=UnknownChannel(f"{self.peer_id} has not joined {draft.channel_id}"),
            )
        with self._lock:
            directory = self.store.directory
            cert = directory.cert_at(draft.creator)
            if cert is None:
                return EndorseOutcome(
                    EndorseStatus.UNAUTHORIZED, error=Unauthorized(f"unknown user {draft.creator!r}")
                )
            if not verify_bytes(cert.public_key, draft.canonical(), proposal.signature):
                return EndorseOutcome(
                    EndorseStatus.BAD_SIGNATURE,
                    error=Unauthorized("proposal signature does not verify"),
                )
            decision = directory.authorize(
                draft.creator, action_for_operation(draft.operation), draft.channel_id
            )
            if not decision and draft.operation == "request_access":
                decision = directory.authorize(draft.creator, Action.VIEW_IMAGES, draft.channel_id)
            if not decision:
                return EndorseOutcome(
                    EndorseStatus.UNAUTHORIZED,
                    error=Unauthorized(f"{draft.creator!r}: {decision.reason.name}"),
                )
            view = StateView(self.store.channel(draft.channel_id))
            try:
                self.processor.execute(draft, view)
            except ContractError as exc:
                return EndorseOutcome(EndorseStatus.CONTRACT_ERROR, error=exc)
            read_set = view.read_set()
            write_set = view.write_set()
            signature = self.org_key.sign(Endorsement.preimage(draft, read_set, write_set))
            return EndorseOutcome(
                EndorseStatus.OK,
                Endorsement(self.peer_id, self.org_id, read_set, write_set, signature),
            )

    # -- block delivery --

    def deliver_block(self, channel_id: str, block: Block) -> DeliverResult:
        result = DeliverResult()
        if channel_id not in self.joined_channels:
            return result
        with self._lock:
            led = self.store.channel(channel_id)
            height = block.header.height
            if height < led.height:
                result.duplicate = True
                return result
            self._pending[channel_id][height] = block
            self._drain(channel_id, result)
        return result

    def _drain(self, channel_id: str, result: DeliverResult) -> None:
        led = self.store.channel(channel_id)
        pending = self._pending[channel_id]
        while led.height in pending:
            block = pending[led.height]
            header = block.header
            if (
                sha256(encode_tx_sequence(block.transactions)) != header.data_hash
                or compute_block_hash(header.height, header.previous_hash, header.data_hash)
                != header.block_hash
                or header.previous_hash != led.tip_hash()
            ):
                # Corrupted in transit: discard and ask for a clean copy.
                del pending[led.height]
                result.hash_mismatch = True
                result.gap_requests.append((channel_id, led.height))
                return
            if channel_id != SYSTEM_CHANNEL and block.identity_height > self.store.identity_height:
                result.gap_requests.append((SYSTEM_CHANNEL, self.store.identity_height))
                return
            del pending[led.height]
            self.store.commit_block(channel_id, block)
            result.committed.append((channel_id, header.height))
            if channel_id == SYSTEM_CHANNEL:
                for other, buffered in self._pending.items():
                    if other != SYSTEM_CHANNEL and buffered:
                        self._drain(other, result)
        if pending:
            result.gap_requests.append((channel_id, led.height))

    def tip_height(self, channel_id: str) -> int:
        return self.store.channel(channel_id).height


# --- ordering service -----------------------------------------------------------

class Orderer:
    """Single sequencer: validates endorsement policy, batches transactions per
    channel, cuts hash-linked blocks, and serves gap requests from its own copy
    of every chain it has cut."""

    MAX_PENDING = 10_000

    def __init__(
        self,
        org_keys: dict[str, bytes],
        clock: Callable[[], float] = time.time,
        batch_size: int = 10,
        batch_window_s: float = 0.5,
    ):
        self.org_keys = dict(org_keys)
        self.clock = clock
        self.batch_size = batch_size
        self.batch_window_s = batch_window_s
        self.channels: dict[str, Channel] = {}
        self._pending: dict[str, list[tuple[int, bytes, Transaction]]] = {}
        self._first_pending_at: dict[str, float] = {}
        self._blocks: dict[str, list[Block]] = {}
        self._seen: dict[str, set[bytes]] = {}
        self._lock = threading.RLock()

    def register_org(self, org_id: str, public_key: bytes) -> None:
        self.org_keys[org_id] = public_key

    def register_channel(self, channel: Channel) -> None:
        with self._lock:
            self.channels[channel.channel_id] = channel
            self._pending.setdefault(channel.channel_id, [])
            self._blocks.setdefault(channel.channel_id, [])
            self._seen.setdefault(channel.channel_id, set())

    @property
    def identity_cut_height(self) -> int:
        return len(self._blocks.get(SYSTEM_CHANNEL, ()))

    def submit_for_ordering(self, tx: Transaction, endorsements: Sequence[Endorsement]) -> bytes:
        """Admit a transaction to the ordering queue; returns the tx_id."""
        channel = self.channels.get(tx.channel_id)
        if channel is None:
            raise UnknownChannel(tx.channel_id)
        if sha256(tx.body_bytes()) != tx.tx_id:
            raise RadchainError("tx_id does not hash the transaction body")
        draft = TxDraft(
            tx.channel_id, tx.contract, tx.operation, tx.args, tx.creator, tx.proposal_time
        )
        endorsing_orgs: set[str] = set()
        for end in endorsements:
            if end.org_id not in channel.member_orgs:
                continue
            key = self.org_keys.get(end.org_id)
            if key is None:
                continue
            if end.write_set != tx.write_set:
                raise MismatchedWriteSets(tx.tx_id.hex())
            preimage = Endorsement.preimage(draft, end.read_set, end.write_set)
            if verify_bytes(key, preimage, end.signature):
                endorsing_orgs.add(end.org_id)
        if len(endorsing_orgs) < channel.endorsement_threshold:
            raise InsufficientEndorsements(
                f"{len(endorsing_orgs)} < {channel.endorsement_threshold}"
            )
        with self._lock:
            pending = self._pending[tx.channel_id]
            if len(pending) >= self.MAX_PENDING:
                raise Backpressure(tx.channel_id)
            if tx.tx_id in self._seen[tx.channel_id]:
                return tx.tx_id
            self._seen[tx.channel_id].add(tx.tx_id)
            arrival_ms = int(self.clock() * 1000)
            pending.append((arrival_ms, tx.tx_id, tx))
            self._first_pending_at.setdefault(tx.channel_id, self.clock())
        return tx.tx_id

    def _cut_channel(self, channel_id: str) -> Optional[Block]:
        pending = self._pending[channel_id]
        if not pending:
            return None
        # FIFO by arrival, ties broken by ascending tx_id bytes.
        pending.sort(key=lambda item: (item[0], item[1]))
        batch = [tx for _, _, tx in pending[: self.batch_size]]
        del pending[: self.batch_size]
        if pending:
            self._first_pending_at[channel_id] = self.clock()
        else:
            self._first_pending_at.pop(channel_id, None)
        chain = self._blocks[channel_id]
        height = len(chain)
        previous = chain[-1].header.block_hash if chain else b"\x00" * 32
        data_hash = sha256(encode_tx_sequence(batch))
        header = BlockHeader.build(height, previous, data_hash)
        stamp = height if channel_id == SYSTEM_CHANNEL else self.identity_cut_height
        block = Block(header, stamp, batch, [])
        chain.append(block)
        return block

    def cut_due(self, force: bool = False) -> list[tuple[str, Block]]:
        """Cut every channel whose batch is full or whose window elapsed
        (or everything pending, when forced)."""
        out: list[tuple[str, Block]] = []
        with self._lock:
            now = self.clock()
            # The identity channel cuts first so app-channel stamps cover
            # identity transactions submitted in the same pump.
            for channel_id in sorted(self._pending, key=lambda c: (c != SYSTEM_CHANNEL, c)):
                while True:
                    pending = self._pending[channel_id]
                    if not pending:
                        break
                    due = (
                        force
                        or len(pending) >= self.batch_size
                        or now - self._first_pending_at.get(channel_id, now) >= self.batch_window_s
                    )
                    if not due:
                        break
                    block = self._cut_channel(channel_id)
                    if block is None:
                        break
                    out.append((channel_id, block))
        return out

    def serve_gap(self, channel_id: str, from_height: int) -> list[Block]:
        with self._lock:
            chain = self._blocks.get(channel_id, [])
            return chain[from_height:]

    def chain_length(self, channel_id: str) -> int:
        with self._lock:
            return len(self._blocks.get(channel_id, ()))


# --- transports -------------------------------------------------------------------

class DirectBus:
    """Synchronous in-order delivery to every subscribed peer."""

    def __init__(self):
        self.subscribers: dict[str, list[Peer]] = {}
        self.orderer: Optional[Orderer] = None

    def subscribe(self, channel_id: str, peer: Peer) -> None:
        self.subscribers.setdefault(channel_id, []).append(peer)

    def broadcast(self, channel_id: str, block: Block) -> None:
        for peer in self.subscribers.get(channel_id, ()):
            result = peer.deliver_block(channel_id, block)
            self._serve_gaps(peer, result)

    def _serve_gaps(self, peer: Peer, result: DeliverResult) -> None:
        assert self.orderer is not None
        seen = 0
        while result.gap_requests and seen < 64:
            channel_id, from_height = result.gap_requests.pop(0)
            for missing in self.orderer.serve_gap(channel_id, from_height):
                inner = peer.deliver_block(channel_id, missing)
                result.gap_requests.extend(inner.gap_requests)
            seen += 1

    def drain(self) -> bool:
        return False


class ChaosBus:
    """Seeded virtual-time transport: random per-delivery delays, drops with
    exponential-backoff retries (base 50 ms, x2, cap 2 s), and out-of-order
    arrival. drain() runs the virtual clock until every delivery lands."""

    def __init__(self, seed: int, drop_probability: float = 0.2, max_delay_s: float = 1.0):
        self.rng = Random(seed)
        self.drop_probability = drop_probability
        self.max_delay_s = max_delay_s
        self.subscribers: dict[str, list[Peer]] = {}
        self.orderer: Optional[Orderer] = None
        self._now = 0.0
        self._seq = 0
        self._events: list[tuple[float, int, Peer, str, Block, float]] = []

    def subscribe(self, channel_id: str, peer: Peer) -> None:
        self.subscribers.setdefault(channel_id, []).append(peer)

    def _schedule(self, peer: Peer, channel_id: str, block: Block, backoff: float) -> None:
        delay = self.rng.uniform(0.0, self.max_delay_s)
        self._seq += 1
        heapq.heappush(
            self._events, (self._now + delay, self._seq, peer, channel_id, block, backoff)
        )

    def broadcast(self, channel_id: str, block: Block) -> None:
        for peer in self.subscribers.get(channel_id, ()):
            self._schedule(peer, channel_id, block, 0.05)

    def drain(self) -> bool:
        did_work = bool(self._events)
        while self._events:
            at, _seq, peer, channel_id, block, backoff = heapq.heappop(self._events)
            self._now = max(self._now, at)
            if self.rng.random() < self.drop_probability:
                # Dropped in transit: retry after backoff.
                self._seq += 1
                heapq.heappush(
                    self._events,
                    (self._now + backoff, self._seq, peer, channel_id, block, min(backoff * 2, 2.0)),
                )
                continue
            result = peer.deliver_block(channel_id, block)
            if result.gap_requests:
                assert self.orderer is not None
                for gap_channel, from_height in result.gap_requests:
                    for missing in self.orderer.serve_gap(gap_channel, from_height):
                        self._schedule(peer, gap_channel, missing, 0.05)
        return did_work


# --- the network facade -------------------------------------------------------------

@dataclass
class Org:
    org_id: str
    keypair: KeyPair
    peer_ids: list[str] = field(default_factory=list)


class Network:
    """Bootstraps the CA, organizations, peers and ordering service, and wires
    transports. All test/sim traffic flows through the same code paths a live
    gateway uses; pump() runs the cut/deliver cycle to quiescence."""

    def __init__(
        self,
        org_peer_counts: Optional[dict[str, int]] = None,
        data_root: Optional[str] = None,
        bus=None,
        clock: Callable[[], float] = time.time,
        batch_size: int = 10,
        batch_window_s: float = 0.5,
        ca_seed: Optional[bytes] = None,
        auto_pump: bool = True,
    ):
        org_peer_counts = org_peer_counts or {}
        self.clock = clock
        self.auto_pump = auto_pump
        self.data_root = data_root
        self.bus = bus if bus is not None else DirectBus()
        self.ca = CertificateAuthority(root_seed=ca_seed, clock=clock)
        self.orgs: dict[str, Org] = {}
        self.peers: dict[str, Peer] = {}
        self.channels: dict[str, Channel] = {}
        self.orderer = Orderer({}, clock=clock, batch_size=batch_size, batch_window_s=batch_window_s)
        self.bus.orderer = self.orderer
        self._driver: Optional[threading.Thread] = None
        self._driver_stop = threading.Event()

        # The CA runs the identity channel through a peer of its own org.
        ca_org = Org(CertificateAuthority.ORG_ID, KeyPair.generate())
        self.orgs[ca_org.org_id] = ca_org
        self.orderer.register_org(ca_org.org_id, ca_org.keypair.public_key)
        ca_store = LedgerStore(
            self._peer_dir("ca.peer0"), trust_anchor=self.ca.trust_anchor
        )
        self.ca_peer = Peer("ca.peer0", ca_org.org_id, ca_org.keypair, ca_store)
        self.peers[self.ca_peer.peer_id] = self.ca_peer
        ca_org.peer_ids.append(self.ca_peer.peer_id)
        # The CA's directory view is its store's replica.
        self.ca.directory = ca_store.directory
        self.ca.committer = self._commit_identity_op

        for org_id, n_peers in org_peer_counts.items():
            self.add_org(org_id, n_peers)

        system = Channel(
            SYSTEM_CHANNEL,
            frozenset(self.orgs),
            endorsement_threshold=1,
        )
        self.channels[SYSTEM_CHANNEL] = system
        self.orderer.register_channel(system)
        for peer in self.peers.values():
            peer.join_channel(SYSTEM_CHANNEL, system.member_orgs)
            self.bus.subscribe(SYSTEM_CHANNEL, peer)

    def _peer_dir(self, peer_id: str) -> Optional[str]:
        if self.data_root is None:
            return None
        import os

        return os.path.join(self.data_root, peer_id)

    def add_org(self, org_id: str, n_peers: int) -> Org:
        if org_id in self.orgs:
            raise UnknownOrg(f"org {org_id!r} already exists")
        org = Org(org_id, KeyPair.generate())
        self.orgs[org_id] = org
        self.orderer.register_org(org_id, org.keypair.public_key)
        for store in self._all_stores():
            store.register_org(org_id)
        for i in range(n_peers):
            peer_id = f"{org_id}.peer{i}"
            store = LedgerStore(self._peer_dir(peer_id), trust_anchor=self.ca.trust_anchor)
            for existing_org in self.orgs:
                store.register_org(existing_org)
            peer = Peer(peer_id, org_id, org.keypair, store)
            self.peers[peer_id] = peer
            org.peer_ids.append(peer_id)
            system = self.channels.get(SYSTEM_CHANNEL)
            if system is not None:
                peer.join_channel(SYSTEM_CHANNEL, system.member_orgs)
                self.bus.subscribe(SYSTEM_CHANNEL, peer)
        return org

    def _all_stores(self) -> list[LedgerStore]:
        return [p.store for p in self.peers.values()]

    # -- identity commit path --

    def _commit_identity_op(self, operation: str, args: list[bytes]) -> None:
        draft = TxDraft(
            channel_id=SYSTEM_CHANNEL,
            contract=CONTRACT_FOR_OPERATION[operation],
            operation=operation,
            args=tuple(args),
            creator=CertificateAuthority.ROOT_USER,
            proposal_time=int(self.clock()),
        )
        signature = self.ca.root_key.sign(draft.canonical())
        outcome = self.ca_peer.endorse(Proposal(draft, signature))
        endorsement = outcome.raise_if_rejected()
        tx = Transaction.assemble(
            draft, endorsement.read_set, endorsement.write_set, self.ca.root_key
        )
        self.orderer.submit_for_ordering(tx, [endorsement])
        if self.auto_pump:
            self.pump()
            receipt = self.find_commit(SYSTEM_CHANNEL, tx.tx_id)
        else:
            receipt = self.wait_commit(SYSTEM_CHANNEL, tx.tx_id)
        if receipt is None or receipt[2] != TxFlag.VALID:
            raise CommitFailed(receipt[2] if receipt else TxFlag.UNAUTHORIZED, operation)

    # -- channels --

    def create_channel_preimage(self, channel_id: str, member_orgs, threshold: int) -> bytes:
        return (
            b"create-channel"
            + codec.string(channel_id)
            + codec.sequence(sorted(member_orgs), codec.string)
            + codec.u32(threshold)
        )

    def create_channel(
        self,
        admin_sig: bytes,
        channel_id: str,
        member_orgs: Iterable[str],
        endorsement_threshold: int = 1,
    ) -> Channel:
        members = frozenset(member_orgs)
        preimage = self.create_channel_preimage(channel_id, members, endorsement_threshold)
        self.ca._admin_for(admin_sig, preimage)
        if channel_id in self.channels:
            raise DuplicateChannel(channel_id)
        for org in members:
            if org not in self.orgs:
                raise UnknownOrg(org)
        if not 1 <= endorsement_threshold <= len(members):
            raise BadThreshold(f"t={endorsement_threshold} with {len(members)} member orgs")
        channel = Channel(channel_id, members, endorsement_threshold)
        self.channels[channel_id] = channel
        self.orderer.register_channel(channel)
        for peer in self.peers.values():
            if peer.org_id in members:
                peer.join_channel(channel_id, members)
                self.bus.subscribe(channel_id, peer)
        # The MSP's org->channel map covers every channel, including ones the
        # CA itself does not join.
        for org in members:
            if self.ca.directory.has_org(org):
                self.ca.directory.add_org_channel(org, channel_id)
        return channel

    # -- client plumbing --

    def peers_of_org(self, org_id: str) -> list[Peer]:
        return [self.peers[pid] for pid in self.orgs[org_id].peer_ids]

    def peer_for_channel(self, channel_id: str) -> Peer:
        channel = self.channels.get(channel_id)
        if channel is None:
            raise UnknownChannel(channel_id)
        for org in sorted(channel.member_orgs):
            org_rec = self.orgs.get(org)
            if org_rec and org_rec.peer_ids:
                return self.peers[org_rec.peer_ids[0]]
        raise UnknownChannel(f"{channel_id} has no peers")

    def endorse(self, draft: TxDraft, signature: bytes) -> list[Endorsement]:
        channel = self.channels.get(draft.channel_id)
        if channel is None:
            raise UnknownChannel(draft.channel_id)
        proposal = Proposal(draft, signature)
        endorsements: list[Endorsement] = []
        last_outcome: Optional[EndorseOutcome] = None
        for org in sorted(channel.member_orgs):
            org_rec = self.orgs.get(org)
            if not org_rec or not org_rec.peer_ids:
                continue
            peer = self.peers[org_rec.peer_ids[0]]
            outcome = peer.endorse(proposal)
            last_outcome = outcome
            if outcome.status == EndorseStatus.OK:
                assert outcome.endorsement is not None
                endorsements.append(outcome.endorsement)
                if len({e.org_id for e in endorsements}) >= channel.endorsement_threshold:
                    break
            else:
                outcome.raise_if_rejected()
        if len({e.org_id for e in endorsements}) < channel.endorsement_threshold:
            if last_outcome is not None and last_outcome.status != EndorseStatus.OK:
                last_outcome.raise_if_rejected()
            raise InsufficientEndorsements(draft.operation)
        return endorsements

    def find_commit(self, channel_id: str, tx_id: bytes):
        peer = self.peer_for_channel(channel_id)
        return peer.store.channel(channel_id).find_tx(tx_id)

    def wait_commit(self, channel_id: str, tx_id: bytes, timeout_s: float = 10.0):
        deadline = time.monotonic() + timeout_s
        while True:
            found = self.find_commit(channel_id, tx_id)
            if found is not None:
                return found
            if time.monotonic() > deadline:
                raise CommitFailed(TxFlag.UNAUTHORIZED, "commit wait timed out")
            time.sleep(0.01)

    def pump(self, force: bool = True, max_rounds: int = 64) -> None:
        """Cut every due batch and run the transport to quiescence."""
        for _ in range(max_rounds):
            cut = self.orderer.cut_due(force=force)
            for channel_id, block in cut:
                self.bus.broadcast(channel_id, block)
            drained = self.bus.drain()
            if not cut and not drained:
                return

    # -- live mode --

    def start_driver(self, interval_s: float = 0.05) -> None:
        """Background batch cutter for live (gateway) deployments."""
        if self._driver is not None:
            return
        self._driver_stop.clear()

        def loop():
            while not self._driver_stop.wait(interval_s):
                cut = self.orderer.cut_due(force=False)
                for channel_id, block in cut:
                    self.bus.broadcast(channel_id, block)
                self.bus.drain()

        self._driver = threading.Thread(target=loop, name="radchain-orderer", daemon=True)
        self._driver.start()

    def stop_driver(self) -> None:
        if self._driver is not None:
            self._driver_stop.set()
            self._driver.join(timeout=2)
            self._driver = None

    def client(self, user_id: str, keypair: KeyPair) -> "ChainClient":
        return ChainClient(self, user_id, keypair)


@dataclass
class CommitReceipt:
    tx_id: bytes
    height: int
    index: int
    flag: TxFlag


class ChainClient:
    """Client-side submission flow: sign a draft, gather endorsements, assemble
    and sign the final transaction, submit it for ordering, await commit."""

    def __init__(self, network: Network, user_id: str, keypair: KeyPair):
        self.network = network
        self.user_id = user_id
        self.keypair = keypair

    def submit(
        self,
        channel_id: str,
        operation: str,
        args: Sequence[bytes],
        wait: bool = True,
        timeout_s: float = 10.0,
        proposal_time: Optional[int] = None,
    ) -> CommitReceipt:
        draft = TxDraft(
            channel_id=channel_id,
            contract=CONTRACT_FOR_OPERATION[operation],
            operation=operation,
            args=tuple(args),
            creator=self.user_id,
            proposal_time=int(self.network.clock()) if proposal_time is None else proposal_time,
        )
        signature = self.keypair.sign(draft.canonical())
        endorsements = self.network.endorse(draft, signature)
        tx = Transaction.assemble(
            draft, endorsements[0].read_set, endorsements[0].write_set, self.keypair
        )
        self.network.orderer.submit_for_ordering(tx, endorsements)
        if not wait:
            return CommitReceipt(tx.tx_id, -1, -1, TxFlag.VALID)
        if self.network.auto_pump:
            self.network.pump()
            found = self.network.find_commit(channel_id, tx.tx_id)
            if found is None:
                raise CommitFailed(TxFlag.UNAUTHORIZED, "transaction was not committed")
        else:
            found = self.network.wait_commit(channel_id, tx.tx_id, timeout_s)
        height, index, flag = found
        if flag != TxFlag.VALID:
            raise CommitFailed(flag, operation)
        return CommitReceipt(tx.tx_id, height, index, flag)

    # -- convenience wrappers over the contract surface --

    def anchor_exam(self, channel_id: str, record, wait: bool = True) -> CommitReceipt:
        return self.submit(channel_id, "anchor_exam", [record.encode()], wait=wait)

    def request_access(
        self, channel_id: str, exam_id: str, reason, wait: bool = True
    ) -> tuple[bytes, CommitReceipt]:
        from .contracts import derive_request_id

        nonce = secrets.token_bytes(8)
        proposal_time = int(self.network.clock())
        receipt = self.submit(
            channel_id,
            "request_access",
            [exam_id.encode("utf-8"), bytes([int(reason)]), nonce],
            wait=wait,
            proposal_time=proposal_time,
        )
        request_id = derive_request_id(exam_id, self.user_id, proposal_time, nonce)
        return request_id, receipt

    def evaluate_access(self, channel_id: str, request_id: bytes) -> CommitReceipt:
        return self.submit(channel_id, "evaluate_access", [request_id])

    def submit_report(
        self, channel_id: str, exam_id: str, body_text: str, impression_text: str
    ) -> tuple[str, CommitReceipt]:
        from .contracts import derive_report_id

        nonce = secrets.token_bytes(8)
        proposal_time = int(self.network.clock())
        receipt = self.submit(
            channel_id,
            "submit_report",
            [
                exam_id.encode("utf-8"),
                body_text.encode("utf-8"),
                impression_text.encode("utf-8"),
                nonce,
            ],
            proposal_time=proposal_time,
        )
        return derive_report_id(exam_id, self.user_id, proposal_time, nonce), receipt

    def acknowledge_alert(self, channel_id: str, alert_id: str) -> CommitReceipt:
        return self.submit(channel_id, "acknowledge_alert", [alert_id.encode("utf-8")])

    def configure_keywords(self, channel_id: str, keywords: Iterable[str]) -> CommitReceipt:
        payload = codec.sequence(sorted(keywords), codec.string)
        return self.submit(channel_id, "configure_keywords", [payload])

    def record_token_issue(self, channel_id: str, record) -> CommitReceipt:
        return self.submit(channel_id, "record_token_issue", [record.encode()])

    def record_image_fetch(self, channel_id: str, record) -> CommitReceipt:
        return self.submit(channel_id, "record_image_fetch", [record.encode()])

    def query_state(self, channel_id: str, key: str):
        return self.network.peer_for_channel(channel_id).store.query_state(channel_id, key)
