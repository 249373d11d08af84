from omicledger.ledger.records import (
    Block,
    BlockRejected,
    GenesisConfig,
    LedgerState,
    LedgerTransaction,
    ValidationResult,
    build_genesis_block,
    validate_transaction,
    verify_chain,
)
from omicledger.ledger.consensus import ConsensusMessage, ValidatorNode

__all__ = [
    "Block",
    "BlockRejected",
    "ConsensusMessage",
    "GenesisConfig",
    "LedgerState",
    "LedgerTransaction",
    "ValidationResult",
    "ValidatorNode",
    "build_genesis_block",
    "validate_transaction",
    "verify_chain",
]
