"""Deterministic smart contracts executed against channel world state.

Three contract families share one processor: exam anchoring (on-chain anchors
for off-chain studies), image-access control (request / automatic evaluation /
data-access records), and reporting with automated critical-results
notification. Contract code is pure: it touches nothing beyond the provided
state view, the identity directory, and the transaction's own fields, so every
honest peer simulates identical read/write sets.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Iterable, Optional

from . import codec
from .codec import Reader
from .errors import (
    AlreadyAcknowledged,
    AlreadyDecided,
    ContractError,
    DuplicateExam,
    EmptyImageSet,
    InvalidKeyword,
    NoAccessGrant,
    Unauthorized,
    UnknownAlert,
    UnknownExam,
    UnknownRequest,
)
from .identity import MembershipDirectory, Role
from .ledger import (
    ABSENT_VERSION,
    HASH_SIZE,
    ChannelLedger,
    ContractType,
    ReadEntry,
    TxDraft,
    Version,
    WriteEntry,
)


class AccessReason(IntEnum):
    INTERPRETATION = 0
    PRIOR_COMPARISON = 1
    MISSING_IMAGES = 2


class RequestStatus(IntEnum):
    PENDING = 0
    GRANTED = 1
    DENIED = 2


# Which request reasons each role may be granted. Radiologists read studies;
# referring physicians only pull priors or completeness checks for their own
# patients.
REASONS_BY_ROLE: dict[Role, frozenset[AccessReason]] = {
    Role.RADIOLOGIST: frozenset(AccessReason),
    Role.PHYSICIAN: frozenset({AccessReason.PRIOR_COMPARISON, AccessReason.MISSING_IMAGES}),
}


# --- world-state keys (bit-exact scheme) --------------------------------------

def exam_key(channel_id: str, exam_id: str) -> str:
    return f"exam/{channel_id}/{exam_id}"


def request_key(channel_id: str, request_id: bytes) -> str:
    return f"req/{channel_id}/{request_id.hex()}"


def grant_key(channel_id: str, exam_id: str, user_id: str) -> str:
    return f"grant/{channel_id}/{exam_id}/{user_id}"


def report_key(channel_id: str, report_id: str) -> str:
    return f"report/{channel_id}/{report_id}"


def alert_key(channel_id: str, alert_id: str) -> str:
    return f"alert/{channel_id}/{alert_id}"


def keyword_config_key(channel_id: str) -> str:
    return f"kwcfg/{channel_id}"


def token_key(channel_id: str, token_id: str) -> str:
    return f"access/{channel_id}/{token_id}"


def fetch_key(channel_id: str, token_id: str, fetch_index: int) -> str:
    return f"fetch/{channel_id}/{token_id}/{fetch_index}"


# --- state value types ----------------------------------------------------------

@dataclass(frozen=True)
class ExamRecord:
    exam_id: str
    org_id: str
    modality: str
    referring_physician: str
    image_hashes: tuple[bytes, ...]
    image_count: int
    prior_exam_ids: tuple[str, ...]
    created_at: int

    def encode(self) -> bytes:
        return b"".join(
            (
                codec.string(self.exam_id),
                codec.string(self.org_id),
                codec.string(self.modality),
                codec.string(self.referring_physician),
                codec.sequence(self.image_hashes, lambda h: codec.fixed_bytes(h, HASH_SIZE)),
                codec.u32(self.image_count),
                codec.sequence(self.prior_exam_ids, codec.string),
                codec.u64(self.created_at),
            )
        )

    @classmethod
    def decode(cls, buf: bytes) -> "ExamRecord":
        r = Reader(buf)
        rec = cls(
            exam_id=r.string(),
            org_id=r.string(),
            modality=r.string(),
            referring_physician=r.string(),
            image_hashes=tuple(r.sequence(lambda rr: rr.fixed_bytes(HASH_SIZE))),
            image_count=r.u32(),
            prior_exam_ids=tuple(r.sequence(lambda rr: rr.string())),
            created_at=r.u64(),
        )
        r.expect_end()
        return rec


@dataclass(frozen=True)
class AccessRequest:
    request_id: bytes
    exam_id: str
    requester: str
    reason: AccessReason
    status: RequestStatus
    decided_at: Optional[int] = None

    def encode(self) -> bytes:
        return b"".join(
            (
                codec.fixed_bytes(self.request_id, HASH_SIZE),
                codec.string(self.exam_id),
                codec.string(self.requester),
                codec.u8(int(self.reason)),
                codec.u8(int(self.status)),
                codec.optional_u64(self.decided_at),
            )
        )

    @classmethod
    def decode(cls, buf: bytes) -> "AccessRequest":
        r = Reader(buf)
        req = cls(
            request_id=r.fixed_bytes(HASH_SIZE),
            exam_id=r.string(),
            requester=r.string(),
            reason=AccessReason(r.u8()),
            status=RequestStatus(r.u8()),
            decided_at=r.optional_u64(),
        )
        r.expect_end()
        return req


@dataclass(frozen=True)
class GrantRecord:
    request_id: bytes
    exam_id: str
    user_id: str
    decided_at: int

    def encode(self) -> bytes:
        return (
            codec.fixed_bytes(self.request_id, HASH_SIZE)
            + codec.string(self.exam_id)
            + codec.string(self.user_id)
            + codec.u64(self.decided_at)
        )

    @classmethod
    def decode(cls, buf: bytes) -> "GrantRecord":
        r = Reader(buf)
        rec = cls(r.fixed_bytes(HASH_SIZE), r.string(), r.string(), r.u64())
        r.expect_end()
        return rec


@dataclass(frozen=True)
class RadiologyReport:
    report_id: str
    exam_id: str
    author: str
    body_text: str
    impression_text: str
    finalized_at: int
    is_critical: bool
    matched_keywords: tuple[str, ...]

    def encode(self) -> bytes:
        return b"".join(
            (
                codec.string(self.report_id),
                codec.string(self.exam_id),
                codec.string(self.author),
                codec.string(self.body_text),
                codec.string(self.impression_text),
                codec.u64(self.finalized_at),
                codec.boolean(self.is_critical),
                codec.sequence(self.matched_keywords, codec.string),
            )
        )

    @classmethod
    def decode(cls, buf: bytes) -> "RadiologyReport":
        r = Reader(buf)
        rep = cls(
            report_id=r.string(),
            exam_id=r.string(),
            author=r.string(),
            body_text=r.string(),
            impression_text=r.string(),
            finalized_at=r.u64(),
            is_critical=r.boolean(),
            matched_keywords=tuple(r.sequence(lambda rr: rr.string())),
        )
        r.expect_end()
        return rep


@dataclass(frozen=True)
class CriticalAlert:
    alert_id: str
    report_id: str
    exam_id: str
    recipient: str
    matched_keywords: tuple[str, ...]
    raised_at: int
    acknowledged: bool
    acknowledged_at: Optional[int] = None

    def encode(self) -> bytes:
        return b"".join(
            (
                codec.string(self.alert_id),
                codec.string(self.report_id),
                codec.string(self.exam_id),
                codec.string(self.recipient),
                codec.sequence(self.matched_keywords, codec.string),
                codec.u64(self.raised_at),
                codec.boolean(self.acknowledged),
                codec.optional_u64(self.acknowledged_at),
            )
        )

    @classmethod
    def decode(cls, buf: bytes) -> "CriticalAlert":
        r = Reader(buf)
        alert = cls(
            alert_id=r.string(),
            report_id=r.string(),
            exam_id=r.string(),
            recipient=r.string(),
            matched_keywords=tuple(r.sequence(lambda rr: rr.string())),
            raised_at=r.u64(),
            acknowledged=r.boolean(),
            acknowledged_at=r.optional_u64(),
        )
        r.expect_end()
        return alert


@dataclass(frozen=True)
class KeywordConfig:
    channel_id: str
    keywords: tuple[str, ...]
    version: int

    def encode(self) -> bytes:
        return (
            codec.string(self.channel_id)
            + codec.sequence(self.keywords, codec.string)
            + codec.u32(self.version)
        )

    @classmethod
    def decode(cls, buf: bytes) -> "KeywordConfig":
        r = Reader(buf)
        cfg = cls(r.string(), tuple(r.sequence(lambda rr: rr.string())), r.u32())
        r.expect_end()
        return cfg


@dataclass(frozen=True)
class TokenIssueRecord:
    token_id: str
    exam_id: str
    user_id: str
    issued_at: int
    ttl_seconds: int

    def encode(self) -> bytes:
        return (
            codec.string(self.token_id)
            + codec.string(self.exam_id)
            + codec.string(self.user_id)
            + codec.u64(self.issued_at)
            + codec.u32(self.ttl_seconds)
        )

    @classmethod
    def decode(cls, buf: bytes) -> "TokenIssueRecord":
        r = Reader(buf)
        rec = cls(r.string(), r.string(), r.string(), r.u64(), r.u32())
        r.expect_end()
        return rec


@dataclass(frozen=True)
class FetchRecord:
    token_id: str
    exam_id: str
    user_id: str
    fetch_index: int
    fetched_at: int
    instance_count: int

    def encode(self) -> bytes:
        return (
            codec.string(self.token_id)
            + codec.string(self.exam_id)
            + codec.string(self.user_id)
            + codec.u32(self.fetch_index)
            + codec.u64(self.fetched_at)
            + codec.u32(self.instance_count)
        )

    @classmethod
    def decode(cls, buf: bytes) -> "FetchRecord":
        r = Reader(buf)
        rec = cls(r.string(), r.string(), r.string(), r.u32(), r.u64(), r.u32())
        r.expect_end()
        return rec


# --- keyword detection -----------------------------------------------------------

def _is_word_char(ch: str) -> bool:
    return ch.isalnum()


def _occurs_with_boundaries(text: str, phrase: str) -> bool:
    """Literal substring occurrence with word boundaries at both ends.

    Boundaries are transitions between alphanumeric and non-alphanumeric
    characters (or text edges); both inputs must already be lowercased.
    """
    start = text.find(phrase)
    n = len(phrase)
    while start != -1:
        end = start + n
        left_ok = start == 0 or not _is_word_char(text[start - 1])
        right_ok = end == len(text) or not _is_word_char(text[end])
        if left_ok and right_ok:
            return True
        start = text.find(phrase, start + 1)
    return False


def detect_keywords(
    impression_text: str, body_text: str, keywords: Iterable[str]
) -> list[str]:
    """Every configured keyword occurring case-insensitively at word
    boundaries in either text, deduplicated, in lexicographic order."""
    impression = impression_text.lower()
    body = body_text.lower()
    matched = set()
    for keyword in keywords:
        kw = keyword.lower()
        if not kw:
            continue
        if _occurs_with_boundaries(impression, kw) or _occurs_with_boundaries(body, kw):
            matched.add(kw)
    return sorted(matched)


def _keyword_charset_ok(keyword: str) -> bool:
    return all(ch.isalpha() or ch.isdigit() or ch in " -" for ch in keyword)


def normalize_keywords(keywords: Iterable[str]) -> tuple[str, ...]:
    """Lowercase, trim, deduplicate; raises InvalidKeyword on empty or
    out-of-charset entries (letters, digits, spaces, hyphens only)."""
    normalized = set()
    for raw in keywords:
        kw = raw.strip().lower()
        if not kw:
            raise InvalidKeyword(f"empty keyword from {raw!r}")
        if not _keyword_charset_ok(kw):
            raise InvalidKeyword(f"illegal characters in {raw!r}")
        normalized.add(kw)
    return tuple(sorted(normalized))


# --- contract execution ------------------------------------------------------------

class StateView:
    """Read/write-set recording view over a channel's committed state.

    Reads record the committed version first observed (absent reads record the
    absent sentinel); writes are buffered in execution order and read back
    within the same simulation.
    """

    def __init__(self, ledger: ChannelLedger):
        self._ledger = ledger
        self.reads: dict[str, Version] = {}
        self.writes: dict[str, bytes] = {}

    def get(self, key: str) -> Optional[bytes]:
        if key in self.writes:
            return self.writes[key]
        entry = self._ledger.query_state(key)
        if key not in self.reads:
            self.reads[key] = entry[1] if entry else ABSENT_VERSION
        return entry[0] if entry else None

    def put(self, key: str, value: bytes) -> None:
        self.writes[key] = value

    def read_set(self) -> tuple[ReadEntry, ...]:
        return tuple(ReadEntry(k, v) for k, v in self.reads.items())

    def write_set(self) -> tuple[WriteEntry, ...]:
        return tuple(WriteEntry(k, v) for k, v in self.writes.items())


def derive_request_id(exam_id: str, caller: str, proposal_time: int, nonce: bytes) -> bytes:
    return hashlib.sha256(
        codec.string(exam_id) + codec.string(caller) + codec.u64(proposal_time) + nonce
    ).digest()


def derive_report_id(exam_id: str, author: str, proposal_time: int, nonce: bytes) -> str:
    return hashlib.sha256(
        codec.string(exam_id) + codec.string(author) + codec.u64(proposal_time) + nonce
    ).hexdigest()


def derive_alert_id(report_id: str, recipient: str) -> str:
    return hashlib.sha256(codec.string(report_id) + codec.string(recipient)).hexdigest()


class ContractProcessor:
    """Dispatches draft transactions to contract handlers during endorsement
    simulation. Raises ContractError subclasses on deterministic rejection."""

    def __init__(self, directory: MembershipDirectory):
        self.directory = directory

    def execute(self, draft: TxDraft, view: StateView) -> None:
        handler = self._HANDLERS.get(draft.operation)
        if handler is None:
            raise ContractError(f"unknown operation {draft.operation!r}")
        handler(self, draft, view)

    # -- identity contract --

    def _register_user(self, draft: TxDraft, view: StateView) -> None:
        from .identity import EnrollmentCertificate, cert_state_key

        cert = EnrollmentCertificate.decode(draft.args[0])
        anchor = self.directory.trust_anchor_pubkey
        if anchor is None or not cert.verify(anchor):
            raise Unauthorized("certificate does not verify under the CA root key")
        if not self.directory.has_org(cert.org_id):
            raise ContractError(f"unknown organization {cert.org_id!r}")
        if view.get(cert_state_key(cert.user_id)) is not None:
            raise ContractError(f"duplicate user_id {cert.user_id!r}")
        view.put(cert_state_key(cert.user_id), cert.encode())

    def _revoke_user(self, draft: TxDraft, view: StateView) -> None:
        from .identity import EnrollmentCertificate, cert_state_key

        cert = EnrollmentCertificate.decode(draft.args[0])
        anchor = self.directory.trust_anchor_pubkey
        if anchor is None or not cert.verify(anchor):
            raise Unauthorized("certificate does not verify under the CA root key")
        if not cert.revoked:
            raise ContractError("revocation certificate must carry revoked=true")
        if view.get(cert_state_key(cert.user_id)) is None:
            raise ContractError(f"unknown user {cert.user_id!r}")
        view.put(cert_state_key(cert.user_id), cert.encode())

    # -- exam anchor contract --

    def _anchor_exam(self, draft: TxDraft, view: StateView) -> None:
        record = ExamRecord.decode(draft.args[0])
        cert = self.directory.cert_at(draft.creator)
        if cert is None or cert.role != Role.SITE_ADMIN or cert.org_id != record.org_id:
            raise Unauthorized(
                f"{draft.creator!r} is not a SiteAdmin of {record.org_id!r}"
            )
        if record.image_count == 0 or not record.image_hashes:
            raise EmptyImageSet(record.exam_id)
        if record.image_count != len(record.image_hashes):
            raise ContractError("image_count does not match hash list")
        key = exam_key(draft.channel_id, record.exam_id)
        if view.get(key) is not None:
            raise DuplicateExam(record.exam_id)
        view.put(key, record.encode())

    # -- access contract --

    def _request_access(self, draft: TxDraft, view: StateView) -> None:
        exam_id = draft.args[0].decode("utf-8")
        reason = AccessReason(draft.args[1][0])
        nonce = draft.args[2]
        raw = view.get(exam_key(draft.channel_id, exam_id))
        if raw is None:
            raise UnknownExam(exam_id)
        exam = ExamRecord.decode(raw)
        cert = self.directory.cert_at(draft.creator)
        if cert is None:
            raise Unauthorized(draft.creator)
        if cert.role == Role.PHYSICIAN:
            if exam.referring_physician != draft.creator:
                raise Unauthorized(
                    f"{draft.creator!r} is not the referring physician for {exam_id!r}"
                )
        elif cert.role != Role.RADIOLOGIST:
            raise Unauthorized(f"role {cert.role.name} may not request access")
        request_id = derive_request_id(exam_id, draft.creator, draft.proposal_time, nonce)
        key = request_key(draft.channel_id, request_id)
        if view.get(key) is not None:
            raise ContractError("request_id collision")
        req = AccessRequest(request_id, exam_id, draft.creator, reason, RequestStatus.PENDING)
        view.put(key, req.encode())

    def _evaluate_access(self, draft: TxDraft, view: StateView) -> None:
        request_id = draft.args[0]
        key = request_key(draft.channel_id, request_id)
        raw = view.get(key)
        if raw is None:
            raise UnknownRequest(request_id.hex())
        req = AccessRequest.decode(raw)
        if req.status != RequestStatus.PENDING:
            raise AlreadyDecided(request_id.hex())
        exam_raw = view.get(exam_key(draft.channel_id, req.exam_id))
        cert = self.directory.cert_at(req.requester)
        granted = (
            exam_raw is not None
            and cert is not None
            and not cert.revoked
            and req.reason in REASONS_BY_ROLE.get(cert.role, frozenset())
        )
        if granted and cert.role == Role.PHYSICIAN:
            exam = ExamRecord.decode(exam_raw)
            granted = exam.referring_physician == req.requester
        status = RequestStatus.GRANTED if granted else RequestStatus.DENIED
        decided = replace(req, status=status, decided_at=draft.proposal_time)
        view.put(key, decided.encode())
        if granted:
            grant = GrantRecord(request_id, req.exam_id, req.requester, draft.proposal_time)
            view.put(grant_key(draft.channel_id, req.exam_id, req.requester), grant.encode())

    def _record_token_issue(self, draft: TxDraft, view: StateView) -> None:
        record = TokenIssueRecord.decode(draft.args[0])
        if record.user_id != draft.creator:
            raise Unauthorized("token issuance must be recorded by its holder")
        if view.get(grant_key(draft.channel_id, record.exam_id, record.user_id)) is None:
            raise NoAccessGrant(f"{record.user_id!r} has no grant for {record.exam_id!r}")
        key = token_key(draft.channel_id, record.token_id)
        if view.get(key) is not None:
            raise ContractError("token_id collision")
        view.put(key, record.encode())

    def _record_image_fetch(self, draft: TxDraft, view: StateView) -> None:
        record = FetchRecord.decode(draft.args[0])
        if record.user_id != draft.creator:
            raise Unauthorized("fetch must be recorded by the token holder")
        if view.get(token_key(draft.channel_id, record.token_id)) is None:
            raise ContractError(f"no issuance record for token {record.token_id!r}")
        key = fetch_key(draft.channel_id, record.token_id, record.fetch_index)
        if view.get(key) is not None:
            raise ContractError("fetch already recorded")
        view.put(key, record.encode())

    # -- report contract --

    def _submit_report(self, draft: TxDraft, view: StateView) -> None:
        exam_id = draft.args[0].decode("utf-8")
        body_text = draft.args[1].decode("utf-8")
        impression_text = draft.args[2].decode("utf-8")
        nonce = draft.args[3]
        exam_raw = view.get(exam_key(draft.channel_id, exam_id))
        if exam_raw is None:
            raise UnknownExam(exam_id)
        exam = ExamRecord.decode(exam_raw)
        cert = self.directory.cert_at(draft.creator)
        if cert is None or cert.role != Role.RADIOLOGIST:
            raise Unauthorized(f"{draft.creator!r} may not submit reports")
        if view.get(grant_key(draft.channel_id, exam_id, draft.creator)) is None:
            raise NoAccessGrant(f"{draft.creator!r} holds no grant for {exam_id!r}")
        cfg_raw = view.get(keyword_config_key(draft.channel_id))
        keywords: tuple[str, ...] = ()
        if cfg_raw is not None:
            keywords = KeywordConfig.decode(cfg_raw).keywords
        matched = tuple(detect_keywords(impression_text, body_text, keywords))
        report_id = derive_report_id(exam_id, draft.creator, draft.proposal_time, nonce)
        report = RadiologyReport(
            report_id=report_id,
            exam_id=exam_id,
            author=draft.creator,
            body_text=body_text,
            impression_text=impression_text,
            finalized_at=draft.proposal_time,
            is_critical=bool(matched),
            matched_keywords=matched,
        )
        view.put(report_key(draft.channel_id, report_id), report.encode())
        if matched:
            # Alert committed in the same transaction: a critical report can
            # never exist without its notification.
            alert_id = derive_alert_id(report_id, exam.referring_physician)
            alert = CriticalAlert(
                alert_id=alert_id,
                report_id=report_id,
                exam_id=exam_id,
                recipient=exam.referring_physician,
                matched_keywords=matched,
                raised_at=draft.proposal_time,
                acknowledged=False,
            )
            view.put(alert_key(draft.channel_id, alert_id), alert.encode())

    def _acknowledge_alert(self, draft: TxDraft, view: StateView) -> None:
        alert_id = draft.args[0].decode("utf-8")
        raw = view.get(alert_key(draft.channel_id, alert_id))
        if raw is None:
            raise UnknownAlert(alert_id)
        alert = CriticalAlert.decode(raw)
        if alert.recipient != draft.creator:
            raise Unauthorized(f"{draft.creator!r} is not the alert recipient")
        if alert.acknowledged:
            raise AlreadyAcknowledged(alert_id)
        acked = replace(alert, acknowledged=True, acknowledged_at=draft.proposal_time)
        view.put(alert_key(draft.channel_id, alert_id), acked.encode())

    def _configure_keywords(self, draft: TxDraft, view: StateView) -> None:
        cert = self.directory.cert_at(draft.creator)
        if cert is None or cert.role != Role.SITE_ADMIN:
            raise Unauthorized(f"{draft.creator!r} may not configure keywords")
        r = Reader(draft.args[0])
        raw_keywords = r.sequence(lambda rr: rr.string())
        r.expect_end()
        keywords = normalize_keywords(raw_keywords)
        key = keyword_config_key(draft.channel_id)
        current = view.get(key)
        version = KeywordConfig.decode(current).version + 1 if current else 1
        view.put(key, KeywordConfig(draft.channel_id, keywords, version).encode())

    _HANDLERS = {
        "register_user": _register_user,
        "revoke_user": _revoke_user,
        "anchor_exam": _anchor_exam,
        "request_access": _request_access,
        "evaluate_access": _evaluate_access,
        "record_token_issue": _record_token_issue,
        "record_image_fetch": _record_image_fetch,
        "submit_report": _submit_report,
        "acknowledge_alert": _acknowledge_alert,
        "configure_keywords": _configure_keywords,
    }


CONTRACT_FOR_OPERATION: dict[str, ContractType] = {
    "register_user": ContractType.IDENTITY,
    "revoke_user": ContractType.IDENTITY,
    "anchor_exam": ContractType.ANCHOR,
    "request_access": ContractType.ACCESS,
    "evaluate_access": ContractType.ACCESS,
    "record_token_issue": ContractType.ACCESS,
    "record_image_fetch": ContractType.ACCESS,
    "submit_report": ContractType.REPORT,
    "acknowledge_alert": ContractType.REPORT,
    "configure_keywords": ContractType.REPORT,
}
