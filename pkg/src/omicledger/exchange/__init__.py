from omicledger.exchange.models import (
    BiomarkerRecord,
    EthicsApplication,
    HandshakeError,
    OwnerSession,
    ResearchProject,
    criteria_hash,
)
from omicledger.exchange.board import BoardError, BulletinBoard
from omicledger.exchange.actors import DataOwner, EthicsBoard, Myco, Researcher
from omicledger.exchange.recovery import configure_recovery, recover_wallet

__all__ = [
    "BiomarkerRecord",
    "BoardError",
    "BulletinBoard",
    "DataOwner",
    "EthicsApplication",
    "EthicsBoard",
    "HandshakeError",
    "Myco",
    "OwnerSession",
    "Researcher",
    "ResearchProject",
    "configure_recovery",
    "criteria_hash",
    "recover_wallet",
]
