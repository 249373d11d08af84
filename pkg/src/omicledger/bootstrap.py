"""Genesis and trust-anchor construction: validator sets and self-signed NYMs."""

from __future__ import annotations

import random

from omicledger import crypto
from omicledger.agents import did_from_verification_key
from omicledger.crypto import KeyPair
from omicledger.ledger.records import GenesisConfig, LedgerTransaction


def new_validator_set(rng: random.Random, n: int) -> tuple[list[dict], dict[str, KeyPair]]:
    validators, keys = [], {}
    for i in range(n):
        kp = crypto.generate_keypair(rng.randbytes(32))
        node_id = f"validator-{i}"
        validators.append({"id": node_id, "verification_key": kp.verification_key.hex()})
        keys[node_id] = kp
    return validators, keys


def self_nym(keys: KeyPair, rng: random.Random, role: str = "", alias: str = "") -> LedgerTransaction:
    """Self-signed NYM registering the DID derived from the key itself."""
    did = did_from_verification_key(keys.verification_key)
    payload = {"did": did, "verification_key": keys.verification_key.hex()}
    if role:
        payload["role"] = role
    if alias:
        payload["alias"] = alias
    tx = LedgerTransaction(
        kind="NYM",
        author_did=did,
        payload=payload,
        nonce=rng.randbytes(16).hex(),
    )
    return tx.signed(keys.signing_key)


def make_genesis(
    rng: random.Random,
    n_validators: int,
    anchor_keys: dict[str, KeyPair] | None = None,
) -> tuple[GenesisConfig, dict[str, KeyPair]]:
    """Genesis with a validator roster and initial NYMs for the trust anchors
    (the biomarker issuer and the ethics board)."""
    validators, node_keys = new_validator_set(rng, n_validators)
    genesis_txs = [
        self_nym(keys, rng, role="trust-anchor", alias=label)
        for label, keys in (anchor_keys or {}).items()
    ]
    return GenesisConfig(validators=validators, genesis_txs=genesis_txs), node_keys
