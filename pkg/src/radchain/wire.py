"""TCP wire protocol for multi-process demos.

Frames are [1-byte type | 4-byte big-endian length | canonical payload] with
the same canonical encodings the in-process bus uses. A peer server answers
proposals with endorsements and block deliveries with acks (carrying any gap
requests); an orderer client replicates cut blocks to peer addresses and
serves the gaps peers report.
"""

from __future__ import annotations

import socket
import socketserver
import threading
from dataclasses import dataclass
from typing import Optional

from . import codec
from .codec import Reader
from .errors import RadchainError
from .ledger import Block, ContractType, Transaction, TxDraft, _encode_read_entry, _encode_write_entry, _decode_read_entry, _decode_write_entry
from .network import Endorsement, EndorseStatus, Orderer, Peer, Proposal

MSG_PROPOSAL = 0x01
MSG_ENDORSEMENT = 0x02
MSG_ORDER_SUBMIT = 0x03
MSG_BLOCK_DELIVER = 0x04
MSG_GAP_REQUEST = 0x05
MSG_ACK = 0x06

MAX_FRAME = 64 * 1024 * 1024


def write_frame(sock: socket.socket, msg_type: int, payload: bytes) -> None:
    sock.sendall(codec.u8(msg_type) + codec.u32(len(payload)) + payload)


def read_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("peer closed connection mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> tuple[int, bytes]:
    header = read_exact(sock, 5)
    msg_type = header[0]
    length = int.from_bytes(header[1:5], "big")
    if length > MAX_FRAME:
        raise RadchainError(f"frame of {length} bytes exceeds limit")
    return msg_type, read_exact(sock, length)


# --- payload codecs ---------------------------------------------------------------

def encode_proposal(proposal: Proposal) -> bytes:
    d = proposal.draft
    return (
        codec.string(d.channel_id)
        + codec.u8(int(d.contract))
        + codec.string(d.operation)
        + codec.sequence(d.args, codec.var_bytes)
        + codec.string(d.creator)
        + codec.u64(d.proposal_time)
        + codec.fixed_bytes(proposal.signature, 64)
    )


def decode_proposal(payload: bytes) -> Proposal:
    r = Reader(payload)
    draft = TxDraft(
        channel_id=r.string(),
        contract=ContractType(r.u8()),
        operation=r.string(),
        args=tuple(r.sequence(lambda rr: rr.var_bytes())),
        creator=r.string(),
        proposal_time=r.u64(),
    )
    sig = r.fixed_bytes(64)
    r.expect_end()
    return Proposal(draft, sig)


def encode_endorsement(endorsement: Endorsement) -> bytes:
    return (
        codec.string(endorsement.peer_id)
        + codec.string(endorsement.org_id)
        + codec.sequence(endorsement.read_set, _encode_read_entry)
        + codec.sequence(endorsement.write_set, _encode_write_entry)
        + codec.fixed_bytes(endorsement.signature, 64)
    )


def decode_endorsement(payload: bytes) -> Endorsement:
    r = Reader(payload)
    end = Endorsement(
        peer_id=r.string(),
        org_id=r.string(),
        read_set=tuple(r.sequence(_decode_read_entry)),
        write_set=tuple(r.sequence(_decode_write_entry)),
        signature=r.fixed_bytes(64),
    )
    r.expect_end()
    return end


def encode_order_submit(tx: Transaction, endorsements: list[Endorsement]) -> bytes:
    return codec.var_bytes(tx.encode()) + codec.sequence(
        [encode_endorsement(e) for e in endorsements], codec.var_bytes
    )


def decode_order_submit(payload: bytes) -> tuple[Transaction, list[Endorsement]]:
    r = Reader(payload)
    tx = Transaction.decode_from(Reader(r.var_bytes()))
    endorsements = [decode_endorsement(raw) for raw in r.sequence(lambda rr: rr.var_bytes())]
    r.expect_end()
    return tx, endorsements


def encode_block_deliver(channel_id: str, block: Block) -> bytes:
    return codec.string(channel_id) + codec.var_bytes(block.encode())


def decode_block_deliver(payload: bytes) -> tuple[str, Block]:
    r = Reader(payload)
    channel_id = r.string()
    block = Block.decode(r.var_bytes())
    r.expect_end()
    return channel_id, block


def encode_gap_request(channel_id: str, from_height: int) -> bytes:
    return codec.string(channel_id) + codec.u64(from_height)


def decode_gap_request(payload: bytes) -> tuple[str, int]:
    r = Reader(payload)
    channel_id = r.string()
    from_height = r.u64()
    r.expect_end()
    return channel_id, from_height


@dataclass
class Ack:
    ok: bool
    detail: str = ""
    gap_requests: tuple[tuple[str, int], ...] = ()


def encode_ack(ack: Ack) -> bytes:
    return (
        codec.boolean(ack.ok)
        + codec.string(ack.detail)
        + codec.sequence(
            ack.gap_requests, lambda g: codec.string(g[0]) + codec.u64(g[1])
        )
    )


def decode_ack(payload: bytes) -> Ack:
    r = Reader(payload)
    ok = r.boolean()
    detail = r.string()

    def gap(rr: Reader) -> tuple[str, int]:
        return (rr.string(), rr.u64())

    gaps = tuple(r.sequence(gap))
    r.expect_end()
    return Ack(ok, detail, gaps)


# --- servers ------------------------------------------------------------------------

class _PeerHandler(socketserver.BaseRequestHandler):
    def handle(self):
        peer: Peer = self.server.peer  # type: ignore[attr-defined]
        sock = self.request
        try:
            while True:
                try:
                    msg_type, payload = read_frame(sock)
                except ConnectionError:
                    return
                if msg_type == MSG_PROPOSAL:
                    outcome = peer.endorse(decode_proposal(payload))
                    if outcome.status == EndorseStatus.OK:
                        assert outcome.endorsement is not None
                        write_frame(sock, MSG_ENDORSEMENT, encode_endorsement(outcome.endorsement))
                    else:
                        write_frame(
                            sock,
                            MSG_ACK,
                            encode_ack(Ack(False, f"{outcome.status.name}: {outcome.error}")),
                        )
                elif msg_type == MSG_BLOCK_DELIVER:
                    channel_id, block = decode_block_deliver(payload)
                    result = peer.deliver_block(channel_id, block)
                    write_frame(
                        sock,
                        MSG_ACK,
                        encode_ack(
                            Ack(
                                not result.hash_mismatch,
                                "duplicate" if result.duplicate else "",
                                tuple(result.gap_requests),
                            )
                        ),
                    )
                else:
                    write_frame(sock, MSG_ACK, encode_ack(Ack(False, f"unexpected type {msg_type}")))
        except (ConnectionError, OSError):
            return


class PeerServer:
    """Serves one peer's endorsement and delivery surface over TCP."""

    def __init__(self, peer: Peer, host: str = "127.0.0.1", port: int = 0):
        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = _Server((host, port), _PeerHandler)
        self._server.peer = peer  # type: ignore[attr-defined]
        self.address = self._server.server_address
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()


class _OrdererHandler(socketserver.BaseRequestHandler):
    def handle(self):
        server = self.server
        orderer: Orderer = server.orderer  # type: ignore[attr-defined]
        replicator: "TcpReplicator" = server.replicator  # type: ignore[attr-defined]
        sock = self.request
        try:
            while True:
                try:
                    msg_type, payload = read_frame(sock)
                except ConnectionError:
                    return
                if msg_type == MSG_ORDER_SUBMIT:
                    tx, endorsements = decode_order_submit(payload)
                    try:
                        tx_id = orderer.submit_for_ordering(tx, endorsements)
                        write_frame(sock, MSG_ACK, encode_ack(Ack(True, tx_id.hex())))
                        replicator.flush()
                    except RadchainError as exc:
                        write_frame(sock, MSG_ACK, encode_ack(Ack(False, str(exc))))
                elif msg_type == MSG_GAP_REQUEST:
                    channel_id, from_height = decode_gap_request(payload)
                    for block in orderer.serve_gap(channel_id, from_height):
                        write_frame(sock, MSG_BLOCK_DELIVER, encode_block_deliver(channel_id, block))
                    write_frame(sock, MSG_ACK, encode_ack(Ack(True)))
                else:
                    write_frame(sock, MSG_ACK, encode_ack(Ack(False, f"unexpected type {msg_type}")))
        except (ConnectionError, OSError):
            return


class OrdererServer:
    """Accepts ordered submissions and gap requests over TCP."""

    def __init__(self, orderer: Orderer, replicator: "TcpReplicator", host: str = "127.0.0.1", port: int = 0):
        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = _Server((host, port), _OrdererHandler)
        self._server.orderer = orderer  # type: ignore[attr-defined]
        self._server.replicator = replicator  # type: ignore[attr-defined]
        self.address = self._server.server_address
        self._thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()


class TcpReplicator:
    """Orderer-side delivery: pushes cut blocks to peer addresses over TCP and
    honors the gap requests their acks carry."""

    def __init__(self, orderer: Orderer, peer_addresses: list[tuple[str, int]]):
        self.orderer = orderer
        self.peer_addresses = list(peer_addresses)
        self._lock = threading.Lock()

    def _deliver(self, sock: socket.socket, channel_id: str, block: Block) -> Ack:
        write_frame(sock, MSG_BLOCK_DELIVER, encode_block_deliver(channel_id, block))
        msg_type, payload = read_frame(sock)
        if msg_type != MSG_ACK:
            raise RadchainError(f"expected ack, got type {msg_type}")
        return decode_ack(payload)

    def flush(self) -> None:
        with self._lock:
            cut = self.orderer.cut_due(force=True)
            if not cut:
                return
            for host, port in self.peer_addresses:
                try:
                    with socket.create_connection((host, port), timeout=5) as sock:
                        queue = list(cut)
                        rounds = 0
                        while queue and rounds < 1000:
                            channel_id, block = queue.pop(0)
                            ack = self._deliver(sock, channel_id, block)
                            for gap_channel, from_height in ack.gap_requests:
                                for missing in self.orderer.serve_gap(gap_channel, from_height):
                                    queue.append((gap_channel, missing))
                            rounds += 1
                except OSError:
                    # Peer unreachable: it will catch up via gap requests.
                    continue


class TcpClient:
    """Client-side submission over TCP: endorse at peers, submit to orderer."""

    def __init__(self, orderer_address: tuple[str, int], peer_addresses: list[tuple[str, int]]):
        self.orderer_address = orderer_address
        self.peer_addresses = list(peer_addresses)

    def endorse(self, proposal: Proposal) -> list[Endorsement]:
        endorsements = []
        errors = []
        for host, port in self.peer_addresses:
            with socket.create_connection((host, port), timeout=5) as sock:
                write_frame(sock, MSG_PROPOSAL, encode_proposal(proposal))
                msg_type, payload = read_frame(sock)
                if msg_type == MSG_ENDORSEMENT:
                    endorsements.append(decode_endorsement(payload))
                else:
                    errors.append(decode_ack(payload).detail)
        if not endorsements:
            raise RadchainError("no endorsements: " + "; ".join(errors))
        return endorsements

    def submit(self, tx: Transaction, endorsements: list[Endorsement]) -> Ack:
        with socket.create_connection(self.orderer_address, timeout=5) as sock:
            write_frame(sock, MSG_ORDER_SUBMIT, encode_order_submit(tx, endorsements))
            msg_type, payload = read_frame(sock)
            if msg_type != MSG_ACK:
                raise RadchainError(f"expected ack, got type {msg_type}")
            return decode_ack(payload)
