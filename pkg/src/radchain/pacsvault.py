"""Off-chain content-addressed study vault.

Images live outside the chain; the ledger holds their hashes. The vault honors
only ledger-committed grants, issues time-limited bearer view tokens, and gates
every byte behind hash re-verification against the anchored exam record. Token
issuance and every fetch are themselves committed as data-access transactions,
so the whole access chain reconstructs from the ledger alone.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import struct
import threading
import time
from dataclasses import dataclass
from random import Random
from typing import Callable, Optional

from . import codec
from .codec import Reader
from .contracts import (
    ExamRecord,
    FetchRecord,
    TokenIssueRecord,
    exam_key,
    grant_key,
)
from .errors import (
    AnchorRejected,
    ExpiredToken,
    HashMismatch,
    IntegrityFailure,
    NoGrant,
    RadchainError,
    UnknownExam,
    UnknownToken,
)

DEFAULT_TTL_SECONDS = 15 * 60


@dataclass(frozen=True)
class StudyImage:
    instance_id: str
    content_hash: bytes
    pixel_bytes: bytes


@dataclass(frozen=True)
class StudyBlob:
    exam_id: str
    images: tuple[StudyImage, ...]
    site_protocol_image_count: int


@dataclass
class ViewToken:
    token: bytes
    exam_id: str
    user_id: str
    issued_at: float
    ttl_seconds: int
    consumed_count: int = 0
    # Gateway plumbing: transaction ids of the issuance and latest fetch records.
    issue_tx_id: bytes = b""
    last_fetch_tx_id: bytes = b""

    @property
    def token_hex(self) -> str:
        return self.token.hex()

    @property
    def token_id(self) -> str:
        return hashlib.sha256(self.token).hexdigest()

    def view_url(self) -> str:
        return f"/v1/images/{self.exam_id}?token={self.token_hex}"


@dataclass(frozen=True)
class Completeness:
    complete: bool
    missing: int = 0


def image_payload(instance_id: str, width: int, height: int, pixels: bytes) -> bytes:
    """Opaque image blob: tiny header + 16-bit grayscale payload."""
    if len(pixels) != width * height * 2:
        raise ValueError("pixel buffer does not match dimensions")
    return codec.string(instance_id) + struct.pack(">HH", width, height) + pixels


def synthetic_study(
    exam_id: str,
    n_images: int,
    site_protocol_image_count: int,
    rng: Optional[Random] = None,
    width: int = 16,
    height: int = 16,
) -> StudyBlob:
    rng = rng or Random(0)
    images = []
    for i in range(n_images):
        instance_id = f"{exam_id}.{i:03d}"
        pixels = bytes(rng.getrandbits(8) for _ in range(width * height * 2))
        payload = image_payload(instance_id, width, height, pixels)
        images.append(StudyImage(instance_id, hashlib.sha256(payload).digest(), payload))
    return StudyBlob(exam_id, tuple(images), site_protocol_image_count)


class PacsVault:
    """One site's PACS stand-in for a single channel.

    client_resolver maps a user_id to the ChainClient that signs that user's
    data-access transactions (the gateway's keystore in live deployments).
    """

    def __init__(
        self,
        channel_id: str,
        network,
        root_dir: Optional[str] = None,
        clock: Callable[[], float] = time.time,
        ttl_seconds: int = DEFAULT_TTL_SECONDS,
        client_resolver: Optional[Callable[[str], object]] = None,
    ):
        self.channel_id = channel_id
        self.network = network
        self.root_dir = root_dir
        if root_dir:
            os.makedirs(root_dir, exist_ok=True)
        self.clock = clock
        self.ttl_seconds = ttl_seconds
        self.client_resolver = client_resolver
        self._studies: dict[str, StudyBlob] = {}
        self._tokens: dict[str, ViewToken] = {}
        self._lock = threading.RLock()

    # -- persistence (bit-exact exam file: count, then id | length | bytes) --

    def _study_path(self, exam_id: str) -> Optional[str]:
        if self.root_dir is None:
            return None
        return os.path.join(self.root_dir, f"{exam_id}.study")

    def _meta_path(self, exam_id: str) -> Optional[str]:
        if self.root_dir is None:
            return None
        return os.path.join(self.root_dir, f"{exam_id}.meta.json")

    def _persist(self, blob: StudyBlob) -> None:
        path = self._study_path(blob.exam_id)
        if path is None:
            return
        parts = [codec.u32(len(blob.images))]
        for image in blob.images:
            parts.append(codec.string(image.instance_id))
            parts.append(codec.u32(len(image.pixel_bytes)))
            parts.append(image.pixel_bytes)
        with open(path, "wb") as f:
            f.write(b"".join(parts))
        meta_path = self._meta_path(blob.exam_id)
        assert meta_path is not None
        with open(meta_path, "w") as f:
            json.dump(
                {
                    "exam_id": blob.exam_id,
                    "site_protocol_image_count": blob.site_protocol_image_count,
                    "channel_id": self.channel_id,
                },
                f,
            )

    def _unpersist(self, exam_id: str) -> None:
        for path in (self._study_path(exam_id), self._meta_path(exam_id)):
            if path and os.path.exists(path):
                os.remove(path)

    def _load(self, exam_id: str) -> Optional[StudyBlob]:
        blob = self._studies.get(exam_id)
        if blob is not None:
            return blob
        path = self._study_path(exam_id)
        meta_path = self._meta_path(exam_id)
        if path is None or not os.path.exists(path):
            return None
        with open(path, "rb") as f:
            r = Reader(f.read())
        count = r.u32()
        images = []
        for _ in range(count):
            instance_id = r.string()
            length = r.u32()
            pixel_bytes = r.fixed_bytes(length)
            images.append(
                StudyImage(instance_id, hashlib.sha256(pixel_bytes).digest(), pixel_bytes)
            )
        r.expect_end()
        protocol_count = count
        if meta_path and os.path.exists(meta_path):
            with open(meta_path) as f:
                protocol_count = json.load(f)["site_protocol_image_count"]
        blob = StudyBlob(exam_id, tuple(images), protocol_count)
        self._studies[exam_id] = blob
        return blob

    # -- chain lookups --

    def _anchored_exam(self, exam_id: str) -> Optional[ExamRecord]:
        peer = self.network.peer_for_channel(self.channel_id)
        entry = peer.store.query_state(self.channel_id, exam_key(self.channel_id, exam_id))
        if entry is None:
            return None
        return ExamRecord.decode(entry[0])

    def _grant_exists(self, exam_id: str, user_id: str) -> bool:
        peer = self.network.peer_for_channel(self.channel_id)
        key = grant_key(self.channel_id, exam_id, user_id)
        return peer.store.query_state(self.channel_id, key) is not None

    # -- operations --

    def ingest_study(
        self,
        site_admin_client,
        blob: StudyBlob,
        modality: str,
        referring_physician: str,
        prior_exam_ids: tuple[str, ...] = (),
    ):
        """Persist the study and anchor its hashes on-chain; complete only when
        the anchor commits."""
        for image in blob.images:
            if hashlib.sha256(image.pixel_bytes).digest() != image.content_hash:
                raise HashMismatch(image.instance_id)
        with self._lock:
            if blob.exam_id in self._studies:
                raise RadchainError(f"exam {blob.exam_id!r} already ingested")
            self._persist(blob)
            record = ExamRecord(
                exam_id=blob.exam_id,
                org_id=self._caller_org(site_admin_client),
                modality=modality,
                referring_physician=referring_physician,
                image_hashes=tuple(img.content_hash for img in blob.images),
                image_count=len(blob.images),
                prior_exam_ids=tuple(prior_exam_ids),
                created_at=int(self.clock()),
            )
            try:
                receipt = site_admin_client.anchor_exam(self.channel_id, record)
            except RadchainError as exc:
                self._unpersist(blob.exam_id)
                raise AnchorRejected(str(exc)) from exc
            self._studies[blob.exam_id] = blob
            return receipt

    def _caller_org(self, client) -> str:
        cert = self.network.ca.directory.cert_at(client.user_id)
        if cert is None:
            raise NoGrant(f"unknown user {client.user_id!r}")
        return cert.org_id

    def issue_view_token(self, user_id: str, exam_id: str) -> ViewToken:
        """Mint a bearer token for a committed grant and record the issuance
        as a data-access transaction."""
        if self._anchored_exam(exam_id) is None:
            raise UnknownExam(exam_id)
        if not self._grant_exists(exam_id, user_id):
            raise NoGrant(f"no committed grant for ({user_id!r}, {exam_id!r})")
        client = self._resolve_client(user_id)
        token_bytes = secrets.token_bytes(32)
        token = ViewToken(
            token=token_bytes,
            exam_id=exam_id,
            user_id=user_id,
            issued_at=self.clock(),
            ttl_seconds=self.ttl_seconds,
        )
        record = TokenIssueRecord(
            token_id=token.token_id,
            exam_id=exam_id,
            user_id=user_id,
            issued_at=int(token.issued_at),
            ttl_seconds=self.ttl_seconds,
        )
        receipt = client.record_token_issue(self.channel_id, record)
        token.issue_tx_id = receipt.tx_id
        with self._lock:
            self._tokens[token.token_hex] = token
        return token

    def _resolve_client(self, user_id: str):
        if self.client_resolver is None:
            raise RadchainError("vault has no client resolver configured")
        client = self.client_resolver(user_id)
        if client is None:
            raise NoGrant(f"no signing client for {user_id!r}")
        return client

    def fetch_images(self, token_hex: str) -> list[tuple[str, bytes]]:
        """Return the study bytes behind a valid, unexpired token after
        re-verifying every instance hash against the anchored record."""
        with self._lock:
            token = self._tokens.get(token_hex)
        if token is None:
            raise UnknownToken(token_hex[:16])
        now = self.clock()
        if now >= token.issued_at + token.ttl_seconds:
            raise ExpiredToken(token_hex[:16])
        exam = self._anchored_exam(token.exam_id)
        if exam is None:
            raise UnknownExam(token.exam_id)
        blob = self._load(token.exam_id)
        if blob is None:
            raise UnknownExam(token.exam_id)
        anchored = dict(zip((img.instance_id for img in blob.images), exam.image_hashes))
        for image in blob.images:
            recomputed = hashlib.sha256(image.pixel_bytes).digest()
            if recomputed != anchored.get(image.instance_id):
                raise IntegrityFailure(image.instance_id)
        client = self._resolve_client(token.user_id)
        record = FetchRecord(
            token_id=token.token_id,
            exam_id=token.exam_id,
            user_id=token.user_id,
            fetch_index=token.consumed_count,
            fetched_at=int(now),
            instance_count=len(blob.images),
        )
        receipt = client.record_image_fetch(self.channel_id, record)
        with self._lock:
            token.consumed_count += 1
            token.last_fetch_tx_id = receipt.tx_id
        return [(img.instance_id, img.pixel_bytes) for img in blob.images]

    def check_completeness(self, exam_id: str) -> Completeness:
        blob = self._load(exam_id)
        if blob is None:
            raise UnknownExam(exam_id)
        missing = blob.site_protocol_image_count - len(blob.images)
        if missing <= 0:
            return Completeness(True, 0)
        return Completeness(False, missing)

    def has_study(self, exam_id: str) -> bool:
        return self._load(exam_id) is not None

    def token_info(self, token_hex: str) -> Optional[ViewToken]:
        with self._lock:
            return self._tokens.get(token_hex)

    def tamper_study(self, exam_id: str, instance_index: int, flip_byte: int = 0) -> None:
        """Test hook: corrupt one stored pixel byte after anchoring."""
        blob = self._load(exam_id)
        if blob is None:
            raise UnknownExam(exam_id)
        images = list(blob.images)
        img = images[instance_index]
        pixels = bytearray(img.pixel_bytes)
        pixels[flip_byte % len(pixels)] ^= 0x01
        images[instance_index] = StudyImage(img.instance_id, img.content_hash, bytes(pixels))
        self._studies[exam_id] = StudyBlob(exam_id, tuple(images), blob.site_protocol_image_count)
