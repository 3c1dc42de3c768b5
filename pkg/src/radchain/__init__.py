"""Permissioned blockchain platform for teleradiology: hash-chained ledger
controlling access to an off-chain image vault, smart-contract critical-results
notification, and a workflow simulator comparing the ticket-based baseline
against the on-chain process."""

__version__ = "0.1.0"

from .identity import Action, CertificateAuthority, KeyPair, Role  # noqa: F401
from .ledger import Block, LedgerStore, Transaction, TxFlag  # noqa: F401
from .network import ChainClient, Network  # noqa: F401
