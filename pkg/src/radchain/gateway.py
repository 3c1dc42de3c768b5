"""HTTP gateway: the user application's doorway to the network.

Login is challenge-response against enrollment keys (no passwords); every
mutating endpoint maps 1:1 to a contract operation and returns the tx_id of
the commit it caused; critical alerts stream over resumable server-sent
events. All read surfaces are derived from world state plus the vault, and
every answer is filtered by the session identity's channel membership.
"""

from __future__ import annotations

import asyncio
import json
import secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from fastapi import Depends, FastAPI, Header, Query, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse

from . import codec
from .contracts import (
    AccessRequest,
    CriticalAlert,
    ExamRecord,
    FetchRecord,
    KeywordConfig,
    RadiologyReport,
    RequestStatus,
    TokenIssueRecord,
    exam_key,
    keyword_config_key,
)
from .errors import (
    AlreadyAcknowledged,
    AlreadyDecided,
    ContractError,
    DuplicateUserId,
    ExpiredToken,
    InvalidAdminSignature,
    NoGrant,
    RadchainError,
    Unauthorized,
    UnknownAlert,
    UnknownExam,
    UnknownToken,
    UnknownUser,
)
from .identity import SYSTEM_CHANNEL, Action, KeyPair, Role
from .ledger import TxFlag
from .network import ChainClient, Network
from .pacsvault import PacsVault

LOGIN_NONCE_PREFIX = b"radchain-login:"
LOGIN_NONCE_TTL_S = 120


@dataclass
class Session:
    session_id: str
    user_id: str
    role: Role
    org_id: str
    expires_at: float


@dataclass
class IndexedAlert:
    seq: int
    channel_id: str
    height: int
    tx_index: int
    alert: CriticalAlert


class AlertIndex:
    """Incremental scan of committed blocks for alert writes, in commit order.

    Rebuilding from genesis yields identical sequence numbers, so Last-Event-ID
    resume survives gateway restarts.
    """

    def __init__(self, network: Network):
        self.network = network
        self._cursor: dict[str, int] = {}
        self._alerts: list[IndexedAlert] = []
        self._by_id: dict[str, int] = {}
        self._lock = threading.Lock()

    def refresh(self) -> None:
        with self._lock:
            for channel_id in sorted(self.network.channels):
                if channel_id == SYSTEM_CHANNEL:
                    continue
                try:
                    peer = self.network.peer_for_channel(channel_id)
                except RadchainError:
                    continue
                led = peer.store.channel(channel_id)
                start = self._cursor.get(channel_id, 0)
                with led.lock:
                    blocks = led.blocks[start:]
                for block in blocks:
                    h = block.header.height
                    for idx, (tx, flag) in enumerate(
                        zip(block.transactions, block.validity_flags)
                    ):
                        if flag != TxFlag.VALID:
                            continue
                        for key, value in tx.write_set:
                            if not key.startswith(f"alert/{channel_id}/"):
                                continue
                            alert = CriticalAlert.decode(value)
                            known = self._by_id.get(alert.alert_id)
                            if known is None:
                                entry = IndexedAlert(len(self._alerts), channel_id, h, idx, alert)
                                self._by_id[alert.alert_id] = entry.seq
                                self._alerts.append(entry)
                            else:
                                self._alerts[known].alert = alert
                    self._cursor[channel_id] = h + 1

    def alerts_for(self, user_id: str, after_seq: int = -1) -> list[IndexedAlert]:
        with self._lock:
            return [
                entry
                for entry in self._alerts
                if entry.alert.recipient == user_id and entry.seq > after_seq
            ]


class Keystore:
    """Enrollment signing keys held by the user-application layer."""

    def __init__(self, directory: Optional[str] = None):
        self.directory = directory
        self._keys: dict[str, KeyPair] = {}
        if directory:
            import os

            os.makedirs(directory, exist_ok=True)
            for name in os.listdir(directory):
                if name.endswith(".key"):
                    with open(os.path.join(directory, name)) as f:
                        seed = bytes.fromhex(f.read().strip())
                    self._keys[name[:-4]] = KeyPair.from_seed(seed)

    def put(self, user_id: str, keypair: KeyPair) -> None:
        self._keys[user_id] = keypair
        if self.directory:
            import os

            with open(os.path.join(self.directory, f"{user_id}.key"), "w") as f:
                f.write(keypair.seed().hex())

    def get(self, user_id: str) -> Optional[KeyPair]:
        return self._keys.get(user_id)

    def users(self) -> list[str]:
        return sorted(self._keys)


@dataclass
class GatewayContext:
    network: Network
    vaults: dict[str, PacsVault]
    keystore: Keystore
    session_ttl_s: int = 3600
    poll_interval_s: float = 0.2
    static_dir: Optional[str] = None
    sessions: dict[str, Session] = field(default_factory=dict)
    login_nonces: dict[str, tuple[bytes, float]] = field(default_factory=dict)
    service_clients: dict[str, ChainClient] = field(default_factory=dict)
    alert_index: Optional[AlertIndex] = None

    def __post_init__(self):
        if self.alert_index is None:
            self.alert_index = AlertIndex(self.network)

    @property
    def clock(self):
        return self.network.clock

    def client_for(self, user_id: str) -> Optional[ChainClient]:
        kp = self.keystore.get(user_id)
        if kp is None:
            return None
        return self.network.client(user_id, kp)

    def user_channels(self, user_id: str) -> list[str]:
        cert = self.network.ca.directory.cert_at(user_id)
        if cert is None or cert.revoked:
            return []
        return sorted(
            ch
            for ch in self.network.channels
            if ch != SYSTEM_CHANNEL
            and self.network.ca.directory.is_channel_member(cert.org_id, ch)
        )


class ApiError(RadchainError):
    def __init__(self, status_code: int, detail: str, error: str = "error"):
        self.status_code = status_code
        self.detail = detail
        self.error = error
        super().__init__(detail)


_ERROR_STATUS: list[tuple[type, int]] = [
    (UnknownExam, 404),
    (UnknownAlert, 404),
    (UnknownToken, 404),
    (UnknownUser, 404),
    (AlreadyAcknowledged, 409),
    (AlreadyDecided, 409),
    (DuplicateUserId, 409),
    (ExpiredToken, 410),
    (NoGrant, 403),
    (Unauthorized, 403),
    (InvalidAdminSignature, 403),
    (ContractError, 422),
    (RadchainError, 400),
]


def _status_for(exc: RadchainError) -> int:
    for klass, status in _ERROR_STATUS:
        if isinstance(exc, klass):
            return status
    return 400


def build_app(ctx: GatewayContext) -> FastAPI:
    app = FastAPI(title="radchain gateway", version="0.1.0")

    @app.exception_handler(RadchainError)
    async def handle_radchain_error(_request: Request, exc: RadchainError):
        status = exc.status_code if isinstance(exc, ApiError) else _status_for(exc)
        return JSONResponse(
            {"error": type(exc).__name__, "detail": str(exc)}, status_code=status
        )

    def current_session(authorization: Optional[str] = Header(default=None)) -> Session:
        if not authorization or not authorization.startswith("Bearer "):
            raise ApiError(401, "missing bearer session", "NoSession")
        session = ctx.sessions.get(authorization[len("Bearer "):])
        if session is None:
            raise ApiError(401, "unknown session", "NoSession")
        if ctx.clock() >= session.expires_at:
            ctx.sessions.pop(session.session_id, None)
            raise ApiError(401, "session expired", "SessionExpired")
        cert = ctx.network.ca.directory.cert_at(session.user_id)
        if cert is None or cert.revoked:
            raise ApiError(401, "identity revoked", "Revoked")
        return session

    def channel_for_exam(session: Session, exam_id: str) -> tuple[str, ExamRecord]:
        for channel_id in ctx.user_channels(session.user_id):
            peer = ctx.network.peer_for_channel(channel_id)
            entry = peer.store.query_state(channel_id, exam_key(channel_id, exam_id))
            if entry is not None:
                return channel_id, ExamRecord.decode(entry[0])
        # Identical response whether the exam exists on a foreign channel or
        # not at all: no existence oracle, no identifier echo.
        raise ApiError(404, "exam not found", "UnknownExam")

    def require_client(session: Session) -> ChainClient:
        client = ctx.client_for(session.user_id)
        if client is None:
            raise ApiError(403, f"no enrollment key held for {session.user_id!r}", "NoKey")
        return client

    # -- login -----------------------------------------------------------------

    @app.post("/v1/login")
    async def login(body: dict):
        user_id = body.get("user_id", "")
        directory = ctx.network.ca.directory
        if "signature" not in body:
            cert = directory.cert_at(user_id)
            if cert is None or cert.revoked:
                raise ApiError(401, "unknown or revoked user", "Unauthorized")
            nonce = secrets.token_bytes(32)
            ctx.login_nonces[user_id] = (nonce, ctx.clock() + LOGIN_NONCE_TTL_S)
            return {"user_id": user_id, "nonce": nonce.hex()}
        stored = ctx.login_nonces.get(user_id)
        if stored is None or ctx.clock() > stored[1] or stored[0].hex() != body.get("nonce"):
            raise ApiError(401, "no active login challenge", "Unauthorized")
        signature = bytes.fromhex(body["signature"])
        message = LOGIN_NONCE_PREFIX + stored[0]
        if not directory.verify_signature(message, signature, user_id):
            raise ApiError(401, "challenge signature does not verify", "Unauthorized")
        ctx.login_nonces.pop(user_id, None)
        cert = directory.cert_at(user_id)
        assert cert is not None
        session = Session(
            session_id=secrets.token_hex(32),
            user_id=user_id,
            role=cert.role,
            org_id=cert.org_id,
            expires_at=ctx.clock() + ctx.session_ttl_s,
        )
        ctx.sessions[session.session_id] = session
        return {
            "session_id": session.session_id,
            "user_id": user_id,
            "role": cert.role.name,
            "org_id": cert.org_id,
            "expires_at": session.expires_at,
        }

    # -- worklist and exams -------------------------------------------------------

    def _worklist_entry(channel_id: str, exam: ExamRecord, session: Session) -> dict:
        peer = ctx.network.peer_for_channel(channel_id)
        led = peer.store.channel(channel_id)
        vault = ctx.vaults.get(channel_id)
        completeness = {"status": "unknown"}
        if vault is not None and vault.has_study(exam.exam_id):
            c = vault.check_completeness(exam.exam_id)
            completeness = (
                {"status": "complete"}
                if c.complete
                else {"status": "incomplete", "missing": c.missing}
            )
        access_status = "none"
        grant = led.query_state(f"grant/{channel_id}/{exam.exam_id}/{session.user_id}")
        if grant is not None:
            access_status = "granted"
        else:
            for key in led.keys_with_prefix(f"req/{channel_id}/"):
                entry = led.query_state(key)
                if entry is None:
                    continue
                req = AccessRequest.decode(entry[0])
                if req.exam_id != exam.exam_id or req.requester != session.user_id:
                    continue
                if req.status == RequestStatus.PENDING:
                    access_status = "pending"
                elif req.status == RequestStatus.DENIED and access_status == "none":
                    access_status = "denied"
        report_status = "none"
        critical = False
        for key in led.keys_with_prefix(f"report/{channel_id}/"):
            entry = led.query_state(key)
            if entry is None:
                continue
            report = RadiologyReport.decode(entry[0])
            if report.exam_id == exam.exam_id:
                report_status = "final"
                critical = critical or report.is_critical
        return {
            "exam_id": exam.exam_id,
            "channel_id": channel_id,
            "modality": exam.modality,
            "org_id": exam.org_id,
            "referring_physician": exam.referring_physician,
            "image_count": exam.image_count,
            "completeness": completeness,
            "access_status": access_status,
            "report_status": report_status,
            "critical": critical,
        }

    @app.get("/v1/worklist")
    async def worklist(session: Session = Depends(current_session)):
        rows = []
        for channel_id in ctx.user_channels(session.user_id):
            peer = ctx.network.peer_for_channel(channel_id)
            led = peer.store.channel(channel_id)
            for key in led.keys_with_prefix(f"exam/{channel_id}/"):
                entry = led.query_state(key)
                if entry is None:
                    continue
                exam = ExamRecord.decode(entry[0])
                rows.append(_worklist_entry(channel_id, exam, session))
        rows.sort(key=lambda r: (r["channel_id"], r["exam_id"]))
        return {"entries": rows}

    @app.get("/v1/exams/{exam_id}")
    async def exam_detail(exam_id: str, session: Session = Depends(current_session)):
        channel_id, exam = channel_for_exam(session, exam_id)
        entry = _worklist_entry(channel_id, exam, session)
        entry["image_hashes"] = [h.hex() for h in exam.image_hashes]
        entry["prior_exam_ids"] = list(exam.prior_exam_ids)
        entry["created_at"] = exam.created_at
        return entry

    # -- access requests ------------------------------------------------------------

    @app.post("/v1/access-requests")
    async def create_access_request(body: dict, session: Session = Depends(current_session)):
        exam_id = body.get("exam_id", "")
        reason = int(body.get("reason", 0))
        channel_id, _exam = channel_for_exam(session, exam_id)
        client = require_client(session)
        request_id, receipt = client.request_access(channel_id, exam_id, reason)
        response = {
            "request_id": request_id.hex(),
            "tx_id": receipt.tx_id.hex(),
            "status": "pending",
        }
        svc = ctx.service_clients.get(channel_id)
        if svc is not None:
            # Automatic evaluation: the deterministic contract decides.
            eval_receipt = svc.evaluate_access(channel_id, request_id)
            peer = ctx.network.peer_for_channel(channel_id)
            entry = peer.store.query_state(
                channel_id, f"req/{channel_id}/{request_id.hex()}"
            )
            status = "pending"
            if entry is not None:
                status = AccessRequest.decode(entry[0]).status.name.lower()
            response["evaluation_tx_id"] = eval_receipt.tx_id.hex()
            response["status"] = status
        return JSONResponse(response, status_code=201)

    # -- view links and images ---------------------------------------------------------

    @app.post("/v1/view-links")
    async def create_view_link(body: dict, session: Session = Depends(current_session)):
        exam_id = body.get("exam_id", "")
        channel_id, _exam = channel_for_exam(session, exam_id)
        vault = ctx.vaults.get(channel_id)
        if vault is None:
            raise UnknownExam(exam_id)
        token = vault.issue_view_token(session.user_id, exam_id)
        return JSONResponse(
            {
                "view_url": token.view_url(),
                "expires_at": token.issued_at + token.ttl_seconds,
                "tx_id": token.issue_tx_id.hex(),
            },
            status_code=201,
        )

    @app.get("/v1/images/{exam_id}")
    async def fetch_images(exam_id: str, token: str = Query(...)):
        for vault in ctx.vaults.values():
            if vault.has_study(exam_id):
                vt = vault.token_info(token)
                if vt is not None and vt.exam_id != exam_id:
                    raise ApiError(404, "unknown token or exam", "UnknownToken")
                images = vault.fetch_images(token)
                vt = vault.token_info(token)
                tx_hex = vt.last_fetch_tx_id.hex() if vt else ""
                parts = [codec.u32(len(images))]
                for instance_id, pixel_bytes in images:
                    parts.append(codec.string(instance_id))
                    parts.append(codec.u32(len(pixel_bytes)))
                    parts.append(pixel_bytes)
                return Response(
                    content=b"".join(parts),
                    media_type="application/octet-stream",
                    headers={"X-Radchain-Tx": tx_hex},
                )
        raise ApiError(404, "unknown token or exam", "UnknownToken")

    # -- reports ------------------------------------------------------------------------

    @app.post("/v1/reports")
    async def submit_report(body: dict, session: Session = Depends(current_session)):
        exam_id = body.get("exam_id", "")
        channel_id, _exam = channel_for_exam(session, exam_id)
        client = require_client(session)
        report_id, receipt = client.submit_report(
            channel_id,
            exam_id,
            body.get("body_text", ""),
            body.get("impression_text", ""),
        )
        peer = ctx.network.peer_for_channel(channel_id)
        entry = peer.store.query_state(channel_id, f"report/{channel_id}/{report_id}")
        is_critical = False
        matched: list[str] = []
        if entry is not None:
            report = RadiologyReport.decode(entry[0])
            is_critical = report.is_critical
            matched = list(report.matched_keywords)
        return JSONResponse(
            {
                "report_id": report_id,
                "tx_id": receipt.tx_id.hex(),
                "is_critical": is_critical,
                "matched_keywords": matched,
            },
            status_code=201,
        )

    # -- alerts ----------------------------------------------------------------------------

    def _alert_payload(entry: IndexedAlert) -> dict:
        alert = entry.alert
        return {
            "seq": entry.seq,
            "alert_id": alert.alert_id,
            "report_id": alert.report_id,
            "exam_id": alert.exam_id,
            "recipient": alert.recipient,
            "matched_keywords": list(alert.matched_keywords),
            "raised_at": alert.raised_at,
            "acknowledged": alert.acknowledged,
            "acknowledged_at": alert.acknowledged_at,
            "channel_id": entry.channel_id,
            "height": entry.height,
        }

    @app.get("/v1/alerts")
    async def list_alerts(session: Session = Depends(current_session)):
        if session.role != Role.PHYSICIAN:
            raise ApiError(403, "alert board is physician-only", "Forbidden")
        assert ctx.alert_index is not None
        ctx.alert_index.refresh()
        return {"alerts": [_alert_payload(e) for e in ctx.alert_index.alerts_for(session.user_id)]}

    @app.get("/v1/alerts/stream")
    async def stream_alerts(
        request: Request,
        session: Session = Depends(current_session),
        last_event_id: Optional[str] = Header(default=None, alias="Last-Event-ID"),
        once: bool = Query(default=False),
    ):
        """Resumable alert stream. once=true drains the backlog and closes
        (the polling fallback); otherwise the stream stays open and polls the
        committed-alert index."""
        if session.role != Role.PHYSICIAN:
            raise ApiError(403, "alert stream is physician-only", "Forbidden")
        assert ctx.alert_index is not None
        resume_from = -1
        if last_event_id:
            try:
                resume_from = int(last_event_id)
            except ValueError:
                resume_from = -1

        async def generate():
            cursor = resume_from
            heartbeat_every = 15.0
            last_beat = time.monotonic()
            while True:
                if await request.is_disconnected():
                    return
                ctx.alert_index.refresh()
                for entry in ctx.alert_index.alerts_for(session.user_id, cursor):
                    cursor = entry.seq
                    payload = json.dumps(_alert_payload(entry))
                    yield f"id: {entry.seq}\nevent: alert\ndata: {payload}\n\n"
                if once:
                    return
                if time.monotonic() - last_beat >= heartbeat_every:
                    last_beat = time.monotonic()
                    yield ": heartbeat\n\n"
                await asyncio.sleep(ctx.poll_interval_s)

        return StreamingResponse(
            generate(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.post("/v1/alerts/{alert_id}/ack")
    async def ack_alert(alert_id: str, session: Session = Depends(current_session)):
        client = require_client(session)
        for channel_id in ctx.user_channels(session.user_id):
            peer = ctx.network.peer_for_channel(channel_id)
            entry = peer.store.query_state(channel_id, f"alert/{channel_id}/{alert_id}")
            if entry is None:
                continue
            receipt = client.acknowledge_alert(channel_id, alert_id)
            return {"alert_id": alert_id, "tx_id": receipt.tx_id.hex(), "acknowledged": True}
        raise ApiError(404, "alert not found", "UnknownAlert")

    # -- audit -------------------------------------------------------------------------------

    def _require_audit(session: Session, channel_id: str) -> None:
        decision = ctx.network.ca.directory.authorize(
            session.user_id, Action.READ_AUDIT, channel_id
        )
        if not decision:
            raise ApiError(403, f"audit read denied: {decision.reason.name}", "Forbidden")

    def _tx_touches_exam(tx, channel_id: str, exam_id: str) -> list[dict]:
        rows = []
        for key, value in tx.write_set:
            summary: Optional[str] = None
            if key == exam_key(channel_id, exam_id):
                summary = "exam anchored"
            elif key.startswith(f"req/{channel_id}/"):
                req = AccessRequest.decode(value)
                if req.exam_id == exam_id:
                    summary = f"access request {req.status.name.lower()}"
            elif key.startswith(f"grant/{channel_id}/{exam_id}/"):
                summary = "access granted"
            elif key.startswith(f"access/{channel_id}/"):
                rec = TokenIssueRecord.decode(value)
                if rec.exam_id == exam_id:
                    summary = "view token issued"
            elif key.startswith(f"fetch/{channel_id}/"):
                rec = FetchRecord.decode(value)
                if rec.exam_id == exam_id:
                    summary = "images fetched"
            elif key.startswith(f"report/{channel_id}/"):
                rep = RadiologyReport.decode(value)
                if rep.exam_id == exam_id:
                    summary = "report finalized" + (" (critical)" if rep.is_critical else "")
            elif key.startswith(f"alert/{channel_id}/"):
                alert = CriticalAlert.decode(value)
                if alert.exam_id == exam_id:
                    summary = "alert acknowledged" if alert.acknowledged else "alert raised"
            if summary is not None:
                rows.append({"key": key, "summary": summary})
        return rows

    @app.get("/v1/audit/exams/{exam_id}")
    async def audit_exam(exam_id: str, session: Session = Depends(current_session)):
        found_channel: Optional[str] = None
        for channel_id in ctx.user_channels(session.user_id):
            peer = ctx.network.peer_for_channel(channel_id)
            if peer.store.query_state(channel_id, exam_key(channel_id, exam_id)) is not None:
                found_channel = channel_id
                break
        if found_channel is None:
            raise ApiError(404, "exam not found", "UnknownExam")
        _require_audit(session, found_channel)
        peer = ctx.network.peer_for_channel(found_channel)
        led = peer.store.channel(found_channel)
        rows = []
        with led.lock:
            blocks = list(led.blocks)
        for block in blocks:
            for idx, (tx, flag) in enumerate(zip(block.transactions, block.validity_flags)):
                if flag != TxFlag.VALID:
                    continue
                touches = _tx_touches_exam(tx, found_channel, exam_id)
                for touch in touches:
                    rows.append(
                        {
                            "height": block.header.height,
                            "tx_index": idx,
                            "tx_id": tx.tx_id.hex(),
                            "operation": tx.operation,
                            "creator": tx.creator,
                            **touch,
                        }
                    )
        return {"exam_id": exam_id, "channel_id": found_channel, "events": rows}

    @app.get("/v1/audit/channels/{channel_id}")
    async def audit_channel(
        channel_id: str,
        session: Session = Depends(current_session),
        from_height: int = Query(default=0),
    ):
        if channel_id not in ctx.network.channels:
            raise ApiError(404, f"unknown channel {channel_id!r}", "UnknownChannel")
        _require_audit(session, channel_id)
        peer = ctx.network.peer_for_channel(channel_id)
        led = peer.store.channel(channel_id)
        with led.lock:
            blocks = led.blocks[from_height:]
        out = []
        for block in blocks:
            txs = []
            for idx, (tx, flag) in enumerate(zip(block.transactions, block.validity_flags)):
                txs.append(
                    {
                        "tx_index": idx,
                        "tx_id": tx.tx_id.hex(),
                        "operation": tx.operation,
                        "creator": tx.creator,
                        "flag": flag.name,
                        "writes": [key for key, _ in tx.write_set],
                    }
                )
            out.append(
                {
                    "height": block.header.height,
                    "block_hash": block.header.block_hash.hex(),
                    "transactions": txs,
                }
            )
        return {"channel_id": channel_id, "blocks": out}

    # -- admin -----------------------------------------------------------------------------

    @app.post("/v1/admin/keywords")
    async def configure_keywords(body: dict, session: Session = Depends(current_session)):
        channel_id = body.get("channel_id", "")
        if channel_id not in ctx.network.channels:
            raise ApiError(404, f"unknown channel {channel_id!r}", "UnknownChannel")
        client = require_client(session)
        receipt = client.configure_keywords(channel_id, body.get("keywords", []))
        peer = ctx.network.peer_for_channel(channel_id)
        entry = peer.store.query_state(channel_id, keyword_config_key(channel_id))
        version = KeywordConfig.decode(entry[0]).version if entry else 0
        return {"tx_id": receipt.tx_id.hex(), "version": version}

    @app.post("/v1/admin/register")
    async def register_user(body: dict, session: Session = Depends(current_session)):
        if session.role != Role.CA_ADMIN:
            raise ApiError(403, "registration is CaAdmin-only", "Forbidden")
        admin_key = ctx.keystore.get(session.user_id)
        if admin_key is None:
            raise ApiError(403, "no admin key held", "NoKey")
        user_id = body["user_id"]
        org_id = body["org_id"]
        role = Role[body["role"]]
        from .identity import register_request_preimage

        response: dict = {"user_id": user_id, "org_id": org_id, "role": role.name}
        if body.get("public_key"):
            public_key = bytes.fromhex(body["public_key"])
        else:
            # Enrollment bootstrap: generate the pair, hold the signing half,
            # and hand the seed back exactly once.
            kp = KeyPair.generate()
            public_key = kp.public_key
            ctx.keystore.put(user_id, kp)
            response["private_seed"] = kp.seed().hex()
        admin_sig = admin_key.sign(register_request_preimage(user_id, org_id, role, public_key))
        cert = ctx.network.ca.register_user(admin_sig, user_id, org_id, role, public_key)
        response["public_key"] = cert.public_key.hex()
        return JSONResponse(response, status_code=201)

    # -- static frontend ---------------------------------------------------------------------

    if ctx.static_dir:
        import os

        from fastapi.staticfiles import StaticFiles

        if os.path.isdir(ctx.static_dir):
            app.mount("/app", StaticFiles(directory=ctx.static_dir, html=True), name="app")

    app.state.ctx = ctx
    return app


# --- demo bootstrap ------------------------------------------------------------------------

DEMO_KEYWORDS = ("intracranial hemorrhage", "pulmonary embolism", "acute stroke")


def build_demo_context(
    seed: int = 42,
    data_dir: Optional[str] = None,
    keystore_dir: Optional[str] = None,
    session_ttl_s: int = 3600,
    static_dir: Optional[str] = None,
) -> GatewayContext:
    """A two-org network with enrolled users, one channel, a vault with three
    studies, and configured critical keywords: enough to drive the whole API."""
    from random import Random

    from .pacsvault import synthetic_study

    network = Network(
        {"hospital-a": 1, "telerad-practice": 1},
        data_root=data_dir,
        auto_pump=True,
    )
    ca = network.ca
    keystore = Keystore(keystore_dir)

    def enroll(user_id: str, org_id: str, role: Role) -> None:
        kp, _cert = ca.enroll(user_id, org_id, role)
        keystore.put(user_id, kp)

    enroll("ca-admin", "ca", Role.CA_ADMIN)
    enroll("site-admin", "hospital-a", Role.SITE_ADMIN)
    enroll("gw-svc", "hospital-a", Role.SUPPORT_STAFF)
    enroll("rad-001", "telerad-practice", Role.RADIOLOGIST)
    enroll("rad-002", "telerad-practice", Role.RADIOLOGIST)
    enroll("phy-001", "hospital-a", Role.PHYSICIAN)
    enroll("phy-002", "hospital-a", Role.PHYSICIAN)
    enroll("staff-001", "hospital-a", Role.SUPPORT_STAFF)

    channel_id = "telerad"
    sig = ca.root_key.sign(
        network.create_channel_preimage(
            channel_id, frozenset({"hospital-a", "telerad-practice"}), 1
        )
    )
    network.create_channel(sig, channel_id, ["hospital-a", "telerad-practice"], 1)

    admin_client = network.client("site-admin", keystore.get("site-admin"))
    admin_client.configure_keywords(channel_id, DEMO_KEYWORDS)

    ctx = GatewayContext(
        network=network,
        vaults={},
        keystore=keystore,
        session_ttl_s=session_ttl_s,
        static_dir=static_dir,
    )
    vault = PacsVault(
        channel_id,
        network,
        root_dir=None if data_dir is None else f"{data_dir}/vault-{channel_id}",
        client_resolver=ctx.client_for,
    )
    ctx.vaults[channel_id] = vault
    ctx.service_clients[channel_id] = network.client("gw-svc", keystore.get("gw-svc"))

    rng = Random(seed)
    demo_exams = [
        ("EX-1001", 3, 3, "phy-001"),
        ("EX-1002", 2, 3, "phy-002"),
        ("EX-1003", 4, 4, "phy-001"),
        ("EX-1004", 2, 2, "phy-001"),
    ]
    for exam_id, n_images, protocol, referring in demo_exams:
        blob = synthetic_study(exam_id, n_images, protocol, rng)
        vault.ingest_study(admin_client, blob, modality="CT", referring_physician=referring)
    return ctx
