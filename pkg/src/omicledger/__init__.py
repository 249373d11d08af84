"""Self-sovereign health-data sharing at desk scale: agents exchanging
verifiable credentials over pairwise connections, a BFT-replicated ledger of
public identity artifacts, and the owner/researcher consent handshake."""

__version__ = "0.1.0"
