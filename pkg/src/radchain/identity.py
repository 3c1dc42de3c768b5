"""Certificate authority and membership service.

Registers users, issues Ed25519-backed enrollment certificates bound to an
organization and role, and answers every authorization question the rest of
the platform asks. Mutations (register/revoke) are serialized through the
ledger commit path when a committer is wired in; the directory itself is a
derived view and can also be driven standalone for tests.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Callable, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from . import codec
from .errors import DuplicateUserId, InvalidAdminSignature, UnknownOrganization, UnknownUser

PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64

# Channel every org implicitly joins; carries all identity transactions.
SYSTEM_CHANNEL = "sys-identity"


class Role(IntEnum):
    RADIOLOGIST = 0
    PHYSICIAN = 1
    SUPPORT_STAFF = 2
    SITE_ADMIN = 3
    CA_ADMIN = 4


class Action(IntEnum):
    REQUEST_ACCESS = 0
    VIEW_IMAGES = 1
    SUBMIT_REPORT = 2
    ACK_ALERT = 3
    RECEIVE_ALERT = 4
    INGEST_STUDY = 5
    CONFIGURE_KEYWORDS = 6
    READ_AUDIT = 7
    REGISTER = 8
    REVOKE = 9


# Role-action matrix. Physicians' VIEW_IMAGES is further restricted to exams
# that name them as referring physician; that refinement lives in the access
# contract because it needs the exam record.
ROLE_ACTIONS: dict[Role, frozenset[Action]] = {
    Role.RADIOLOGIST: frozenset({Action.REQUEST_ACCESS, Action.VIEW_IMAGES, Action.SUBMIT_REPORT}),
    Role.PHYSICIAN: frozenset({Action.VIEW_IMAGES, Action.ACK_ALERT, Action.RECEIVE_ALERT}),
    Role.SITE_ADMIN: frozenset({Action.INGEST_STUDY, Action.CONFIGURE_KEYWORDS}),
    Role.SUPPORT_STAFF: frozenset({Action.READ_AUDIT}),
    Role.CA_ADMIN: frozenset({Action.REGISTER, Action.REVOKE}),
}


class DenyReason(IntEnum):
    UNKNOWN_USER = 0
    REVOKED = 1
    NOT_IN_CHANNEL = 2
    ROLE_FORBIDDEN = 3


@dataclass(frozen=True)
class Decision:
    permitted: bool
    reason: Optional[DenyReason] = None

    def __bool__(self) -> bool:
        return self.permitted


PERMIT = Decision(True)


def deny(reason: DenyReason) -> Decision:
    return Decision(False, reason)


# --- Ed25519 plumbing --------------------------------------------------------

_PUBKEY_CACHE: dict[bytes, Ed25519PublicKey] = {}
_VERIFY_CACHE: dict[tuple[bytes, bytes, bytes], bool] = {}
_VERIFY_CACHE_LIMIT = 1 << 20


def _public_key(raw: bytes) -> Ed25519PublicKey:
    key = _PUBKEY_CACHE.get(raw)
    if key is None:
        key = Ed25519PublicKey.from_public_bytes(raw)
        _PUBKEY_CACHE[raw] = key
    return key


def verify_bytes(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """Verify an Ed25519 signature; results are memoized (pure function)."""
    if len(public_key) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    cache_key = (public_key, signature, hashlib.sha256(message).digest())
    hit = _VERIFY_CACHE.get(cache_key)
    if hit is None:
        try:
            _public_key(public_key).verify(signature, message)
            hit = True
        except (InvalidSignature, ValueError):
            hit = False
        if len(_VERIFY_CACHE) >= _VERIFY_CACHE_LIMIT:
            _VERIFY_CACHE.clear()
        _VERIFY_CACHE[cache_key] = hit
    return hit


@dataclass
class KeyPair:
    """Ed25519 key pair; the private half never appears in any ledger bytes."""

    public_key: bytes
    _private: Ed25519PrivateKey

    @classmethod
    def generate(cls) -> "KeyPair":
        priv = Ed25519PrivateKey.generate()
        return cls(priv.public_key().public_bytes_raw(), priv)

    @classmethod
    def from_seed(cls, seed: bytes) -> "KeyPair":
        priv = Ed25519PrivateKey.from_private_bytes(seed)
        return cls(priv.public_key().public_bytes_raw(), priv)

    def seed(self) -> bytes:
        return self._private.private_bytes_raw()

    def sign(self, message: bytes) -> bytes:
        return self._private.sign(message)


# --- certificates ------------------------------------------------------------

@dataclass(frozen=True)
class EnrollmentCertificate:
    user_id: str
    org_id: str
    role: Role
    public_key: bytes
    issued_at: int
    revoked: bool
    ca_signature: bytes

    def signing_preimage(self) -> bytes:
        return b"".join(
            (
                codec.string(self.user_id),
                codec.string(self.org_id),
                codec.u8(int(self.role)),
                codec.fixed_bytes(self.public_key, PUBLIC_KEY_SIZE),
                codec.u64(self.issued_at),
                codec.boolean(self.revoked),
            )
        )

    def encode(self) -> bytes:
        return self.signing_preimage() + codec.fixed_bytes(self.ca_signature, SIGNATURE_SIZE)

    @classmethod
    def decode(cls, buf: bytes) -> "EnrollmentCertificate":
        r = codec.Reader(buf)
        cert = cls(
            user_id=r.string(),
            org_id=r.string(),
            role=Role(r.u8()),
            public_key=r.fixed_bytes(PUBLIC_KEY_SIZE),
            issued_at=r.u64(),
            revoked=r.boolean(),
            ca_signature=r.fixed_bytes(SIGNATURE_SIZE),
        )
        r.expect_end()
        return cert

    def verify(self, ca_public_key: bytes) -> bool:
        return verify_bytes(ca_public_key, self.signing_preimage(), self.ca_signature)


def cert_state_key(user_id: str) -> str:
    return f"cert/{user_id}"


# --- membership directory ----------------------------------------------------

@dataclass
class CertRecord:
    cert: EnrollmentCertificate
    issued_height: int
    revoked_height: Optional[int] = None


class MembershipDirectory:
    """Derived view over committed identity transactions.

    Heights refer to the system identity channel, which lets validation ask
    authorization questions "as of" the identity snapshot a block was ordered
    against. Lookups are concurrent-safe under CPython's atomic dict ops; all
    mutation goes through the apply_* methods on the single commit path.
    """

    def __init__(self):
        self.certs: dict[str, CertRecord] = {}
        self.org_channels: dict[str, set[str]] = {}
        self.trust_anchor_pubkey: Optional[bytes] = None

    def register_org(self, org_id: str) -> None:
        self.org_channels.setdefault(org_id, set())

    def add_org_channel(self, org_id: str, channel_id: str) -> None:
        if org_id not in self.org_channels:
            raise UnknownOrganization(org_id)
        self.org_channels[org_id].add(channel_id)

    def has_org(self, org_id: str) -> bool:
        return org_id in self.org_channels

    def seed_trust_anchor(self, cert: EnrollmentCertificate) -> None:
        # The CA root identity exists by configuration, not by transaction.
        self.register_org(cert.org_id)
        self.certs[cert.user_id] = CertRecord(cert, issued_height=-1)
        self.trust_anchor_pubkey = cert.public_key

    def apply_issue(self, cert: EnrollmentCertificate, height: int) -> None:
        self.register_org(cert.org_id)
        self.certs[cert.user_id] = CertRecord(cert, issued_height=height)

    def apply_revoke(self, cert: EnrollmentCertificate, height: int) -> None:
        rec = self.certs.get(cert.user_id)
        if rec is None:
            self.certs[cert.user_id] = CertRecord(cert, issued_height=height, revoked_height=height)
            return
        rec.cert = cert
        if rec.revoked_height is None:
            rec.revoked_height = height

    def record(self, user_id: str) -> Optional[CertRecord]:
        return self.certs.get(user_id)

    def cert_at(self, user_id: str, height: Optional[int] = None) -> Optional[EnrollmentCertificate]:
        """Certificate as of the given identity height (None = latest)."""
        rec = self.certs.get(user_id)
        if rec is None:
            return None
        if height is not None and rec.issued_height > height:
            return None
        revoked = rec.revoked_height is not None and (
            height is None or rec.revoked_height <= height
        )
        if revoked != rec.cert.revoked:
            return replace(rec.cert, revoked=revoked)
        return rec.cert

    def is_channel_member(self, org_id: str, channel_id: str) -> bool:
        if channel_id == SYSTEM_CHANNEL:
            return org_id in self.org_channels
        return channel_id in self.org_channels.get(org_id, ())

    def authorize(
        self,
        cert_or_id,
        action: Optional[Action],
        channel_id: str,
        at_height: Optional[int] = None,
    ) -> Decision:
        """Permit iff the certificate exists, is unrevoked, its org belongs to
        the channel, and the role-action matrix allows the action.

        action=None checks membership and revocation only (used for the small
        set of role-exempt system operations).
        """
        if isinstance(cert_or_id, EnrollmentCertificate):
            cert = self.cert_at(cert_or_id.user_id, at_height)
        else:
            cert = self.cert_at(cert_or_id, at_height)
        if cert is None:
            return deny(DenyReason.UNKNOWN_USER)
        if cert.revoked:
            return deny(DenyReason.REVOKED)
        if not self.is_channel_member(cert.org_id, channel_id):
            return deny(DenyReason.NOT_IN_CHANNEL)
        if action is not None and action not in ROLE_ACTIONS[cert.role]:
            return deny(DenyReason.ROLE_FORBIDDEN)
        return PERMIT

    def verify_signature(self, message: bytes, signature: bytes, user_id: str) -> bool:
        """True iff the signature verifies under user_id's key and the
        certificate is currently unrevoked. Unknown users verify as False."""
        cert = self.cert_at(user_id)
        if cert is None or cert.revoked:
            return False
        return verify_bytes(cert.public_key, message, signature)


# --- certificate authority ----------------------------------------------------

def register_request_preimage(user_id: str, org_id: str, role: Role, public_key: bytes) -> bytes:
    return b"ca-register" + codec.string(user_id) + codec.string(org_id) + codec.u8(int(role)) + public_key


def revoke_request_preimage(user_id: str) -> bytes:
    return b"ca-revoke" + codec.string(user_id)


class CertificateAuthority:
    """Single CA root for the network; issues and revokes certificates.

    When a committer callback is wired (by the network), every mutation is
    submitted as an identity-channel transaction and the directory updates on
    commit. Standalone (committer=None) applies mutations directly with a
    local sequence, which is enough for unit-testing the identity rules.
    """

    ROOT_USER = "ca.root"
    ORG_ID = "ca"

    def __init__(self, root_seed: Optional[bytes] = None, clock: Callable[[], float] = time.time):
        self.root_key = KeyPair.from_seed(root_seed) if root_seed else KeyPair.generate()
        self.clock = clock
        self.directory = MembershipDirectory()
        self._local_seq = 0
        # committer(operation, args) -> identity-channel commit; set by the network.
        self.committer: Optional[Callable[[str, list[bytes]], object]] = None
        anchor = self._make_cert(self.ROOT_USER, self.ORG_ID, Role.CA_ADMIN, self.root_key.public_key)
        self.directory.seed_trust_anchor(anchor)
        self.trust_anchor = anchor

    # Certificate construction -------------------------------------------------

    def _make_cert(self, user_id, org_id, role, public_key, revoked=False) -> EnrollmentCertificate:
        unsigned = EnrollmentCertificate(
            user_id=user_id,
            org_id=org_id,
            role=role,
            public_key=public_key,
            issued_at=int(self.clock()),
            revoked=revoked,
            ca_signature=b"\x00" * SIGNATURE_SIZE,
        )
        sig = self.root_key.sign(unsigned.signing_preimage())
        return replace(unsigned, ca_signature=sig)

    def _resign(self, cert: EnrollmentCertificate, revoked: bool) -> EnrollmentCertificate:
        updated = replace(cert, revoked=revoked, ca_signature=b"\x00" * SIGNATURE_SIZE)
        return replace(updated, ca_signature=self.root_key.sign(updated.signing_preimage()))

    def _admin_for(self, signature: bytes, preimage: bytes) -> EnrollmentCertificate:
        for rec in self.directory.certs.values():
            cert = self.directory.cert_at(rec.cert.user_id)
            if cert is None or cert.revoked or cert.role != Role.CA_ADMIN:
                continue
            if verify_bytes(cert.public_key, preimage, signature):
                return cert
        raise InvalidAdminSignature("signature does not verify under any active CaAdmin key")

    def _commit(self, operation: str, args: list[bytes], fallback) -> None:
        if self.committer is not None:
            self.committer(operation, args)
        else:
            fallback(self._local_seq)
            self._local_seq += 1

    # Registration and authorization ---------------------------------------------

    def register_org(self, org_id: str) -> None:
        self.directory.register_org(org_id)

    def register_user(
        self,
        admin_sig: bytes,
        user_id: str,
        org_id: str,
        role: Role,
        public_key: bytes,
    ) -> EnrollmentCertificate:
        self._admin_for(admin_sig, register_request_preimage(user_id, org_id, role, public_key))
        if not self.directory.has_org(org_id):
            raise UnknownOrganization(org_id)
        if self.directory.record(user_id) is not None:
            raise DuplicateUserId(user_id)
        cert = self._make_cert(user_id, org_id, role, public_key)
        self._commit(
            "register_user",
            [cert.encode()],
            lambda seq: self.directory.apply_issue(cert, seq),
        )
        return cert

    def revoke(self, admin_sig: bytes, user_id: str) -> EnrollmentCertificate:
        self._admin_for(admin_sig, revoke_request_preimage(user_id))
        rec = self.directory.record(user_id)
        if rec is None:
            raise UnknownUser(user_id)
        updated = self._resign(rec.cert, revoked=True)
        self._commit(
            "revoke_user",
            [updated.encode()],
            lambda seq: self.directory.apply_revoke(updated, seq),
        )
        return updated

    def authorize(self, cert_or_id, action: Optional[Action], channel_id: str) -> Decision:
        return self.directory.authorize(cert_or_id, action, channel_id)

    def verify_signature(self, message: bytes, signature: bytes, user_id: str) -> bool:
        return self.directory.verify_signature(message, signature, user_id)

    # Convenience for tests and demo setup: sign an admin request with the root key.

    def root_register_sig(self, user_id: str, org_id: str, role: Role, public_key: bytes) -> bytes:
        return self.root_key.sign(register_request_preimage(user_id, org_id, role, public_key))

    def root_revoke_sig(self, user_id: str) -> bytes:
        return self.root_key.sign(revoke_request_preimage(user_id))

    def enroll(self, user_id: str, org_id: str, role: Role, keypair: Optional[KeyPair] = None):
        """Generate (or accept) a key pair and register it in one step."""
        kp = keypair or KeyPair.generate()
        sig = self.root_register_sig(user_id, org_id, role, kp.public_key)
        cert = self.register_user(sig, user_id, org_id, role, kp.public_key)
        return kp, cert
