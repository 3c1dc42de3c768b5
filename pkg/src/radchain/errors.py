"""Exception hierarchy for the whole platform.

Contract-level failures derive from ContractError so endorsement can surface
them uniformly as Rejection(ContractError(detail)); everything else is a
module-level operational error.
"""

from __future__ import annotations


class RadchainError(Exception):
    """Base class for all errors raised by this package."""


# --- identity ---------------------------------------------------------------

class DuplicateUserId(RadchainError):
    pass


class InvalidAdminSignature(RadchainError):
    pass


class UnknownOrganization(RadchainError):
    pass


class UnknownUser(RadchainError):
    pass


# --- ledger -----------------------------------------------------------------

class EmptyBatch(RadchainError):
    pass


class PersistenceFailure(RadchainError):
    pass


class UnknownChannel(RadchainError):
    pass


class CorruptBlockFile(RadchainError):
    def __init__(self, offset: int, detail: str = ""):
        self.offset = offset
        super().__init__(f"corrupt block file at offset {offset}" + (f": {detail}" if detail else ""))


# --- contracts --------------------------------------------------------------

class ContractError(RadchainError):
    """Deterministic contract-level rejection; safe to surface to clients."""


class Unauthorized(ContractError):
    pass


class DuplicateExam(ContractError):
    pass


class EmptyImageSet(ContractError):
    pass


class UnknownExam(ContractError):
    pass


class UnknownRequest(ContractError):
    pass


class AlreadyDecided(ContractError):
    pass


class NoAccessGrant(ContractError):
    pass


class UnknownAlert(ContractError):
    pass


class AlreadyAcknowledged(ContractError):
    pass


class InvalidKeyword(ContractError):
    pass


# --- network ----------------------------------------------------------------

class DuplicateChannel(RadchainError):
    pass


class UnknownOrg(RadchainError):
    pass


class BadThreshold(RadchainError):
    pass


class InsufficientEndorsements(RadchainError):
    pass


class MismatchedWriteSets(RadchainError):
    pass


class Backpressure(RadchainError):
    pass


class CommitFailed(RadchainError):
    """A transaction was ordered but flagged invalid at validation."""

    def __init__(self, flag, detail: str = ""):
        self.flag = flag
        super().__init__(f"transaction invalidated: {flag.name}" + (f" ({detail})" if detail else ""))


# --- pacsvault --------------------------------------------------------------

class HashMismatch(RadchainError):
    def __init__(self, instance_id: str):
        self.instance_id = instance_id
        super().__init__(f"content hash mismatch for instance {instance_id}")


class AnchorRejected(RadchainError):
    pass


class NoGrant(RadchainError):
    pass


class UnknownToken(RadchainError):
    pass


class ExpiredToken(RadchainError):
    pass


class IntegrityFailure(RadchainError):
    def __init__(self, instance_id: str):
        self.instance_id = instance_id
        super().__init__(f"vault bytes no longer match anchored hash for instance {instance_id}")


# --- worksim ----------------------------------------------------------------

class InvalidConfig(RadchainError):
    pass


class ConfigMismatch(RadchainError):
    pass
