"""Ledger records: transactions, blocks, the replicated state fold, and chain
verification.

Exactly five transaction kinds exist — public identity artifacts only. The
validator enforces the content restriction structurally: schema and cred-def
payloads may carry attribute NAMES but never fields that could hold attribute
values or salts.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Iterable

from omicledger import crypto
from omicledger.crypto import Digest32, canonical_bytes, sha256

TX_KINDS = ("NYM", "SCHEMA", "CRED_DEF", "REVOC_REG_DEF", "REVOC_REG_ENTRY")

# field names that could smuggle attribute values or salts into public records
DISALLOWED_PAYLOAD_FIELDS = frozenset(
    {"value", "values", "attr_values", "attribute_values", "salt", "salts", "openings"}
)

GENESIS_PREV_HASH = bytes(32)


class BlockRejected(Exception):
    """A block failed certificate, linkage, or transaction re-validation."""


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


# ---------------------------------------------------------------------------
# Transactions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LedgerTransaction:
    kind: str
    author_did: str
    payload: dict
    nonce: str                  # 16 random bytes, hex
    author_signature: str = ""  # 64-byte signature, hex

    def signing_bytes(self) -> bytes:
        return canonical_bytes(
            {
                "kind": self.kind,
                "author_did": self.author_did,
                "payload": self.payload,
                "nonce": self.nonce,
            }
        )

    def signed(self, signing_key: bytes) -> "LedgerTransaction":
        sig = crypto.sign(signing_key, self.signing_bytes())
        return LedgerTransaction(self.kind, self.author_did, self.payload, self.nonce, sig.hex())

    def digest(self) -> Digest32:
        return sha256(canonical_bytes(self.to_dict()))

    def dedupe_key(self) -> tuple[str, str]:
        return (self.author_did, self.nonce)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "author_did": self.author_did,
            "payload": self.payload,
            "nonce": self.nonce,
            "author_signature": self.author_signature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LedgerTransaction":
        return cls(d["kind"], d["author_did"], d["payload"], d["nonce"], d["author_signature"])


def _nested_keys(obj: object) -> Iterable[str]:
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield str(k)
            yield from _nested_keys(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _nested_keys(v)


def _is_hex_digest(s: object) -> bool:
    return isinstance(s, str) and len(s) == 64 and all(c in "0123456789abcdef" for c in s)


def validate_transaction(tx: LedgerTransaction, state: "LedgerState") -> ValidationResult:
    """Typed accept/reject against the current state; never mutates it."""
    if tx.kind not in TX_KINDS:
        return ValidationResult(False, f"unknown-kind:{tx.kind}")
    if not isinstance(tx.payload, dict):
        return ValidationResult(False, "bad-payload:not-an-object")
    if tx.dedupe_key() in state.seen_nonces:
        return ValidationResult(False, "duplicate-nonce")

    # resolve the key the signature must verify under
    registered = state.nym_index.get(tx.author_did)
    if tx.kind == "NYM":
        did = tx.payload.get("did")
        vk_hex = tx.payload.get("verification_key")
        if not isinstance(did, str) or not _is_hex_digest_len(vk_hex, 64):
            return ValidationResult(False, "bad-payload:nym")
        if registered is None:
            # first appearance: self-registration, signed by the key being
            # registered, for the author's own self-certifying DID
            if tx.author_did != did:
                return ValidationResult(False, "unknown-author")
            from omicledger.agents import did_from_verification_key

            if did_from_verification_key(bytes.fromhex(vk_hex)) != did:
                return ValidationResult(False, "nym-did-not-self-certifying")
            check_key = vk_hex
        else:
            check_key = registered["verification_key"]
        existing = state.nym_index.get(did)
        if existing is not None and existing["verification_key"] != vk_hex:
            return ValidationResult(False, "nym-key-mismatch")
    else:
        if registered is None:
            return ValidationResult(False, "unknown-author")
        check_key = registered["verification_key"]

    try:
        sig_ok = crypto.verify(
            bytes.fromhex(check_key), tx.signing_bytes(), bytes.fromhex(tx.author_signature)
        )
    except ValueError:
        sig_ok = False
    if not sig_ok:
        return ValidationResult(False, "bad-signature")

    if tx.kind in ("SCHEMA", "CRED_DEF"):
        banned = DISALLOWED_PAYLOAD_FIELDS.intersection(_nested_keys(tx.payload))
        if banned:
            return ValidationResult(False, f"disallowed-field:{sorted(banned)[0]}")

    if tx.kind == "SCHEMA":
        sid = tx.payload.get("id")
        attrs = tx.payload.get("attrs")
        if not isinstance(sid, str) or not sid.startswith(tx.author_did + ":"):
            return ValidationResult(False, "bad-payload:schema-id")
        if not isinstance(attrs, list) or not attrs:
            return ValidationResult(False, "bad-payload:schema-attrs")
        names = [a.get("name") for a in attrs if isinstance(a, dict)]
        if len(names) != len(attrs) or len(set(names)) != len(names):
            return ValidationResult(False, "bad-payload:schema-attrs")
        if sid in state.schema_index:
            return ValidationResult(False, "duplicate-schema")

    elif tx.kind == "CRED_DEF":
        cid = tx.payload.get("id")
        schema_id = tx.payload.get("schema_id")
        if not isinstance(cid, str) or not isinstance(schema_id, str):
            return ValidationResult(False, "bad-payload:cred-def")
        if tx.payload.get("issuer_did") != tx.author_did:
            return ValidationResult(False, "bad-payload:cred-def-issuer")
        if schema_id not in state.schema_index:
            return ValidationResult(False, "unknown-schema")
        if cid in state.cred_def_index:
            return ValidationResult(False, "duplicate-cred-def")

    elif tx.kind == "REVOC_REG_DEF":
        rid = tx.payload.get("id")
        cred_def_id = tx.payload.get("cred_def_id")
        if not isinstance(rid, str) or cred_def_id not in state.cred_def_index:
            return ValidationResult(False, "bad-payload:revoc-reg-def")
        if state.cred_def_index[cred_def_id].get("issuer_did") != tx.author_did:
            return ValidationResult(False, "not-registry-owner")
        if rid in state.revocation_sets:
            return ValidationResult(False, "duplicate-registry")

    elif tx.kind == "REVOC_REG_ENTRY":
        rid = tx.payload.get("registry_id")
        handles = tx.payload.get("handles")
        if rid not in state.revocation_sets:
            return ValidationResult(False, "unknown-registry")
        if state.registry_owner(rid) != tx.author_did:
            return ValidationResult(False, "not-registry-owner")
        if (
            not isinstance(handles, list)
            or not handles
            or not all(_is_hex_digest(h) for h in handles)
        ):
            return ValidationResult(False, "bad-payload:handles")
        if set(tx.payload) != {"registry_id", "handles"}:
            return ValidationResult(False, "bad-payload:extra-fields")

    return ValidationResult(True)


def _is_hex_digest_len(s: object, n: int) -> bool:
    return isinstance(s, str) and len(s) == n and all(c in "0123456789abcdef" for c in s)


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------

@dataclass
class Block:
    height: int
    prev_hash: Digest32
    txs: list[LedgerTransaction]
    proposer: str
    quorum_certificate: dict = field(default_factory=dict)  # {"view": int, "votes": [{sender, signature}]}

    def tx_root(self) -> Digest32:
        return crypto.merkle_root([tx.digest() for tx in self.txs])

    def block_hash(self) -> Digest32:
        return sha256(self.height.to_bytes(8, "big") + self.prev_hash + self.tx_root())

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "tx_root": self.tx_root().hex(),
            "txs": [tx.to_dict() for tx in self.txs],
            "proposer": self.proposer,
            "quorum_certificate": self.quorum_certificate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Block":
        block = cls(
            height=d["height"],
            prev_hash=bytes.fromhex(d["prev_hash"]),
            txs=[LedgerTransaction.from_dict(t) for t in d["txs"]],
            proposer=d["proposer"],
            quorum_certificate=d.get("quorum_certificate", {}),
        )
        stored_root = d.get("tx_root")
        if stored_root is not None and stored_root != block.tx_root().hex():
            raise BlockRejected(
                f"block {block.height}: stored tx_root does not match its transactions"
            )
        return block


def commit_vote_bytes(view: int, height: int, block_hash_hex: str, sender: str) -> bytes:
    """Bytes a validator signs when COMMIT-voting; QCs store these votes."""
    return canonical_bytes(
        {
            "phase": "COMMIT",
            "view": view,
            "height": height,
            "block_hash": block_hash_hex,
            "sender": sender,
        }
    )


# ---------------------------------------------------------------------------
# Replicated state
# ---------------------------------------------------------------------------

class LedgerState:
    """Pure fold of apply_block over the chain. Replay reproduces it exactly."""

    def __init__(self) -> None:
        self.nym_index: dict[str, dict] = {}
        self.schema_index: dict[str, dict] = {}
        self.cred_def_index: dict[str, dict] = {}
        self.revocation_sets: dict[str, dict[str, int]] = {}  # registry -> handle -> height
        self._registry_owner: dict[str, str] = {}
        self.seen_nonces: set[tuple[str, str]] = set()
        self.height: int = -1  # height of the last applied block

    def registry_owner(self, registry_id: str) -> str | None:
        return self._registry_owner.get(registry_id)

    def copy(self) -> "LedgerState":
        return copy.deepcopy(self)

    def apply_transaction(self, tx: LedgerTransaction, height: int) -> None:
        result = validate_transaction(tx, self)
        if not result:
            raise BlockRejected(f"invalid tx in block {height}: {result.reason}")
        self.seen_nonces.add(tx.dedupe_key())
        p = tx.payload
        if tx.kind == "NYM":
            self.nym_index[p["did"]] = {
                "did": p["did"],
                "verification_key": p["verification_key"],
                "role": p.get("role", ""),
                "alias": p.get("alias", ""),
            }
        elif tx.kind == "SCHEMA":
            self.schema_index[p["id"]] = dict(p)
        elif tx.kind == "CRED_DEF":
            self.cred_def_index[p["id"]] = dict(p)
        elif tx.kind == "REVOC_REG_DEF":
            self.revocation_sets[p["id"]] = {}
            self._registry_owner[p["id"]] = tx.author_did
        elif tx.kind == "REVOC_REG_ENTRY":
            registry = self.revocation_sets[p["registry_id"]]
            for h in p["handles"]:
                registry.setdefault(h, height)

    def apply_block(self, block: Block, prev_hash: Digest32 | None = None) -> None:
        """Fold one block in. Any invalid tx rejects the whole block."""
        if block.height != self.height + 1:
            raise BlockRejected(f"expected height {self.height + 1}, got {block.height}")
        if prev_hash is not None and block.prev_hash != prev_hash:
            raise BlockRejected(f"prev_hash mismatch at height {block.height}")
        snapshot = self.copy()
        try:
            for tx in block.txs:
                self.apply_transaction(tx, block.height)
        except BlockRejected:
            self.__dict__.update(snapshot.__dict__)
            raise
        self.height = block.height

    # -- queries -----------------------------------------------------------

    def query_nym(self, did: str) -> dict | None:
        return self.nym_index.get(did)

    def query_schema(self, schema_id: str) -> dict | None:
        return self.schema_index.get(schema_id)

    def query_cred_def(self, cred_def_id: str) -> dict | None:
        return self.cred_def_index.get(cred_def_id)

    def query_revoked(self, registry_id: str, handle_hex: str, at_height: int | None = None) -> bool:
        if registry_id not in self.revocation_sets:
            raise KeyError(f"unknown registry {registry_id}")
        first = self.revocation_sets[registry_id].get(handle_hex)
        if first is None:
            return False
        return first <= (at_height if at_height is not None else self.height)

    def serialize(self) -> dict:
        return {
            "height": self.height,
            "nyms": {k: self.nym_index[k] for k in sorted(self.nym_index)},
            "schemas": {k: self.schema_index[k] for k in sorted(self.schema_index)},
            "cred_defs": {k: self.cred_def_index[k] for k in sorted(self.cred_def_index)},
            "revocation_sets": {
                r: {h: self.revocation_sets[r][h] for h in sorted(self.revocation_sets[r])}
                for r in sorted(self.revocation_sets)
            },
        }

    def digest(self) -> Digest32:
        return sha256(canonical_bytes(self.serialize()))


# ---------------------------------------------------------------------------
# Genesis + chain verification
# ---------------------------------------------------------------------------

@dataclass
class GenesisConfig:
    validators: list[dict]          # [{"id": str, "verification_key": hex}]
    genesis_txs: list[LedgerTransaction]

    @property
    def f(self) -> int:
        return (len(self.validators) - 1) // 3

    def validator_keys(self) -> dict[str, bytes]:
        return {v["id"]: bytes.fromhex(v["verification_key"]) for v in self.validators}

    def to_lines(self) -> list[str]:
        lines = [
            json.dumps({"record": "validator", **v}, sort_keys=True) for v in self.validators
        ]
        lines += [
            json.dumps({"record": "genesis_tx", **tx.to_dict()}, sort_keys=True)
            for tx in self.genesis_txs
        ]
        return lines

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "GenesisConfig":
        validators, txs = [], []
        for line in lines:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            kind = rec.pop("record")
            if kind == "validator":
                validators.append(rec)
            elif kind == "genesis_tx":
                txs.append(LedgerTransaction.from_dict(rec))
            else:
                raise ValueError(f"unknown genesis record kind {kind}")
        return cls(validators=validators, genesis_txs=txs)


def build_genesis_block(config: GenesisConfig) -> Block:
    return Block(
        height=0,
        prev_hash=GENESIS_PREV_HASH,
        txs=list(config.genesis_txs),
        proposer="genesis",
        quorum_certificate={"view": 0, "votes": []},
    )


def verify_quorum_certificate(block: Block, validator_keys: dict[str, bytes], f: int) -> str:
    """Empty string if the QC holds (>= 2f+1 distinct valid commit votes)."""
    qc = block.quorum_certificate
    votes = qc.get("votes", [])
    view = qc.get("view")
    block_hash_hex = block.block_hash().hex()
    seen = set()
    valid = 0
    for vote in votes:
        sender = vote.get("sender")
        if sender in seen or sender not in validator_keys:
            continue
        seen.add(sender)
        msg = commit_vote_bytes(view, block.height, block_hash_hex, sender)
        try:
            if crypto.verify(validator_keys[sender], msg, bytes.fromhex(vote["signature"])):
                valid += 1
        except (ValueError, KeyError):
            continue
    if valid < 2 * f + 1:
        return f"quorum certificate has {valid} valid votes, need {2 * f + 1}"
    return ""


def verify_chain(blocks: list[Block], config: GenesisConfig) -> tuple[bool, str]:
    """Validate linkage, roots, certificates, and the state fold from genesis.

    Prefixes of valid chains are valid; the first failure is diagnosed.
    """
    if not blocks:
        return True, "empty chain"
    keys = config.validator_keys()
    state = LedgerState()
    prev_hash: Digest32 | None = None
    for i, block in enumerate(blocks):
        if block.height != i:
            return False, f"block {i}: height field says {block.height}"
        if i == 0:
            if block.prev_hash != GENESIS_PREV_HASH:
                return False, "genesis prev_hash is not 32 zero bytes"
        else:
            if block.prev_hash != prev_hash:
                return False, f"block {i}: prev_hash does not match block {i - 1}"
            diag = verify_quorum_certificate(block, keys, config.f)
            if diag:
                return False, f"block {i}: {diag}"
            view = block.quorum_certificate.get("view", 0)
            expected_proposer = config.validators[view % len(config.validators)]["id"]
            if block.proposer != expected_proposer:
                return False, (
                    f"block {i}: proposer {block.proposer!r} is not the leader of "
                    f"view {view} ({expected_proposer!r})"
                )
        try:
            state.apply_block(block, prev_hash=block.prev_hash if i else None)
        except BlockRejected as exc:
            return False, f"block {i}: {exc}"
        prev_hash = block.block_hash()
    return True, f"verified {len(blocks)} blocks to height {blocks[-1].height}"


def write_block_log(blocks: list[Block]) -> str:
    return "".join(json.dumps(b.to_dict(), sort_keys=True) + "\n" for b in blocks)


def read_block_log(text: str) -> list[Block]:
    return [Block.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
