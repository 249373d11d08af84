"""Verifiable-credential lifecycle: schema and cred-def publication, issuance
over connections, selective-disclosure presentations, and ledger-backed
verification.

A credential never exposes raw values to the ledger or to verifiers: the
issuer signs the Merkle root of salted commitments plus the hash-chain anchors
for integer attributes. Presentations open exactly the requested subset and
prove >=-thresholds by walking holder tokens forward.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from typing import Callable, Optional

from omicledger import crypto
from omicledger.agents import Agent, AgentError, Envelope, ProtocolMessage, WalletStore
from omicledger.crypto import ChainAnchor, KeyPair, canonical_bytes, sha256
from omicledger.ledger.records import LedgerState, LedgerTransaction

CRED_SIG_TAG = b"cred"
BIND_SIG_TAG = b"bind"


class IssuanceError(Exception):
    """Value/schema mismatch or signature failure during issuance."""


class NotHeld(Exception):
    """The wallet holds no credential for the requested definition."""


class CannotSatisfy(Exception):
    """A requested predicate exceeds the held value (distinct from refusal)."""


class Declined(Exception):
    """The holder refused to answer (distinct from cannot-satisfy)."""


# ---------------------------------------------------------------------------
# Schemas and canonical values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttributeSpec:
    name: str
    type: str                 # "string" | "int"
    precision: int = 0        # int attrs: canonical = round(value * 10^precision)
    v_max: int = 0            # int attrs: inclusive chain bound
    unit: str = ""

    def canonical_value(self, raw: object) -> str:
        if self.type == "string":
            if not isinstance(raw, str):
                raise IssuanceError(f"{self.name}: expected string, got {type(raw).__name__}")
            return raw
        if self.type == "int":
            try:
                scaled = Decimal(str(raw)) * (10 ** self.precision)
                canonical = int(scaled.to_integral_value(rounding=ROUND_HALF_UP))
            except (InvalidOperation, ValueError) as exc:
                raise IssuanceError(f"{self.name}: not a number: {raw!r}") from exc
            if not 0 <= canonical <= self.v_max:
                raise IssuanceError(
                    f"{self.name}: canonical value {canonical} outside [0, {self.v_max}]"
                )
            return str(canonical)
        raise IssuanceError(f"{self.name}: unknown attribute type {self.type}")


@dataclass(frozen=True)
class Schema:
    id: str
    name: str
    version: str
    attrs: tuple[AttributeSpec, ...]

    def spec(self, attr_name: str) -> AttributeSpec:
        for a in self.attrs:
            if a.name == attr_name:
                return a
        raise IssuanceError(f"attribute {attr_name} not in schema {self.id}")

    def attr_names(self) -> list[str]:
        return [a.name for a in self.attrs]

    def schema_payload(self) -> dict:
        # on-ledger form carries names/types/precisions; v_max binds in the cred-def
        return {
            "id": self.id,
            "name": self.name,
            "version": self.version,
            "attrs": [
                {"name": a.name, "type": a.type, "precision": a.precision, "unit": a.unit}
                for a in self.attrs
            ],
        }

    def v_max_map(self) -> dict[str, int]:
        return {a.name: a.v_max for a in self.attrs if a.type == "int"}

    @classmethod
    def from_ledger(cls, schema_payload: dict, cred_def_payload: dict) -> "Schema":
        v_max = cred_def_payload.get("v_max", {})
        attrs = tuple(
            AttributeSpec(
                name=a["name"],
                type=a["type"],
                precision=a.get("precision", 0),
                v_max=v_max.get(a["name"], 0),
                unit=a.get("unit", ""),
            )
            for a in schema_payload["attrs"]
        )
        return cls(
            id=schema_payload["id"],
            name=schema_payload["name"],
            version=schema_payload["version"],
            attrs=attrs,
        )


def make_schema(issuer_did: str, name: str, version: str, attrs: list[AttributeSpec]) -> Schema:
    if not attrs:
        raise IssuanceError("schema needs at least one attribute")
    return Schema(id=f"{issuer_did}:{name}:{version}", name=name, version=version, attrs=tuple(attrs))


# ---------------------------------------------------------------------------
# Credential construction and signing
# ---------------------------------------------------------------------------

def revocation_handle(serial: bytes) -> str:
    return sha256(crypto.TAG_REVOC + serial).hex()


def credential_signing_bytes(cred_def_id: str, handle_hex: str, root_hex: str, anchors: list[dict]) -> bytes:
    return CRED_SIG_TAG + canonical_bytes(
        {
            "cred_def_id": cred_def_id,
            "revocation_handle": handle_hex,
            "merkle_root": root_hex,
            "anchors": sorted(anchors, key=lambda a: a["attr_name"]),
        }
    )


def commitment_leaves(attrs: list[dict]) -> list[bytes]:
    """Commitment digests in the credential's stored (schema) order."""
    return [
        crypto.commit_attribute(a["name"], a["value"], bytes.fromhex(a["salt"])).digest
        for a in attrs
    ]


def build_credential(
    schema: Schema,
    cred_def_id: str,
    values: dict[str, object],
    issuer_keys: KeyPair,
    rng: random.Random,
    ledger_height: int,
) -> tuple[dict, dict[str, str]]:
    """Issue one credential bundle over the provided attributes (a subset of
    the schema is fine — one bundle commits whatever records the holder asked
    for). Returns (credential, holder_tokens).

    holder_tokens map int attribute names to H^(v_max - value)(seed); they go
    to the holder once at issuance and are never transmitted again.
    """
    unknown = set(values) - set(schema.attr_names())
    if unknown:
        raise IssuanceError(f"attributes not in schema: {sorted(unknown)}")
    if not values:
        raise IssuanceError("credential needs at least one attribute")

    serial = rng.randbytes(16)
    attrs: list[dict] = []
    anchors: list[dict] = []
    tokens: dict[str, str] = {}
    for spec in schema.attrs:
        if spec.name not in values:
            continue
        canonical = spec.canonical_value(values[spec.name])
        attrs.append({"name": spec.name, "value": canonical, "salt": rng.randbytes(16).hex()})
        if spec.type == "int":
            token, anchor = crypto.chain_issue(
                rng.randbytes(32), int(canonical), spec.v_max, attr_name=spec.name
            )
            anchors.append(
                {"attr_name": spec.name, "v_max": spec.v_max, "anchor": anchor.anchor.hex()}
            )
            tokens[spec.name] = token.hex()

    root = crypto.merkle_root(commitment_leaves(attrs)).hex()
    handle = revocation_handle(serial)
    signature = crypto.sign(
        issuer_keys.signing_key, credential_signing_bytes(cred_def_id, handle, root, anchors)
    )
    credential = {
        "cred_def_id": cred_def_id,
        "schema_id": schema.id,
        "serial": serial.hex(),
        "attrs": attrs,
        "anchors": anchors,
        "merkle_root": root,
        "revocation_handle": handle,
        "issuer_signature": signature.hex(),
        "ledger_height": ledger_height,
    }
    return credential, tokens


def credential_public_parts(credential: dict) -> dict:
    """The signed, value-free parts a presentation carries. Every field here
    is load-bearing for verification; revocation is checked against the
    verifier's own ledger height, so no holder-cited height travels along."""
    return {
        "cred_def_id": credential["cred_def_id"],
        "merkle_root": credential["merkle_root"],
        "anchors": credential["anchors"],
        "revocation_handle": credential["revocation_handle"],
        "issuer_signature": credential["issuer_signature"],
    }


def verify_stored_credential(credential: dict, issuer_vk: bytes) -> bool:
    """Holder-side acceptance check: recompute the root, verify the signature."""
    try:
        root = crypto.merkle_root(commitment_leaves(credential["attrs"])).hex()
    except (KeyError, ValueError, crypto.CryptoError):
        return False
    if root != credential["merkle_root"]:
        return False
    expected_handle = revocation_handle(bytes.fromhex(credential["serial"]))
    if expected_handle != credential["revocation_handle"]:
        return False
    return crypto.verify(
        issuer_vk,
        credential_signing_bytes(
            credential["cred_def_id"], credential["revocation_handle"],
            credential["merkle_root"], credential["anchors"],
        ),
        bytes.fromhex(credential["issuer_signature"]),
    )


# ---------------------------------------------------------------------------
# Presentation requests and presentations
# ---------------------------------------------------------------------------

def make_presentation_request(
    rng: random.Random,
    requested: list[dict],
    purpose_id: str,
) -> dict:
    """requested: [{cred_def_id, reveal: [names], predicates: [[attr, ">=", t]]}]"""
    return {"nonce": rng.randbytes(16).hex(), "requested": requested, "purpose_id": purpose_id}


def create_presentation(wallet: WalletStore, request: dict, rng: random.Random) -> dict:
    """Build a presentation answering `request` from wallet credentials.

    Reveals exactly the requested attributes; predicate proofs come from the
    holder tokens. A fresh binding keypair signs (nonce || roots) so no stable
    holder identifier crosses the wire.
    """
    entries = []
    roots = b""
    for item in request["requested"]:
        cred = _find_credential(wallet, item["cred_def_id"])
        leaves = commitment_leaves(cred["attrs"])
        names = [a["name"] for a in cred["attrs"]]
        by_name = {a["name"]: a for a in cred["attrs"]}

        revealed = []
        for name in item.get("reveal", []):
            if name not in by_name:
                raise NotHeld(f"attribute {name} not in credential {item['cred_def_id']}")
            idx = names.index(name)
            path = crypto.merkle_prove(leaves, idx)
            revealed.append(
                {
                    "name": name,
                    "value": by_name[name]["value"],
                    "salt": by_name[name]["salt"],
                    "path": _path_to_wire(path),
                }
            )

        proofs = []
        tokens = wallet.data["holder_tokens"].get(cred["serial"], {})
        for attr, op, threshold in item.get("predicates", []):
            if op != ">=":
                raise CannotSatisfy(f"unsupported predicate operator {op}")
            if attr not in tokens:
                raise NotHeld(f"no threshold material for attribute {attr}")
            value = int(by_name[attr]["value"])
            if value < threshold:
                raise CannotSatisfy(f"cannot prove {attr} >= {threshold}")
            proof = crypto.threshold_prove(bytes.fromhex(tokens[attr]), value, threshold)
            proofs.append({"attr": attr, "threshold": threshold, "proof": proof.hex()})

        entries.append(
            {
                **credential_public_parts(cred),
                "revealed": revealed,
                "predicate_proofs": proofs,
            }
        )
        roots += bytes.fromhex(cred["merkle_root"])

    binding = crypto.generate_keypair(rng.randbytes(32))
    signature = crypto.sign(
        binding.signing_key, BIND_SIG_TAG + bytes.fromhex(request["nonce"]) + roots
    )
    return {
        "nonce": request["nonce"],
        "credentials": entries,
        "binding_key": binding.verification_key.hex(),
        "binding_signature": signature.hex(),
    }


def _find_credential(wallet: WalletStore, cred_def_id: str) -> dict:
    for cred in wallet.data["credentials"]:
        if cred["cred_def_id"] == cred_def_id:
            return cred
    raise NotHeld(f"no credential for {cred_def_id}")


def _path_to_wire(path: crypto.MerklePath) -> dict:
    return {
        "leaf_index": path.leaf_index,
        "siblings": [[side, digest.hex()] for side, digest in path.siblings],
    }


def path_from_wire(d: dict) -> crypto.MerklePath:
    return crypto.MerklePath(
        leaf_index=d["leaf_index"],
        siblings=tuple((side, bytes.fromhex(h)) for side, h in d["siblings"]),
    )


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    checks: list[dict] = field(default_factory=list)

    def add(self, name: str, ok: bool, detail: str) -> bool:
        self.checks.append({"name": name, "ok": ok, "detail": detail})
        return ok

    @property
    def accepted(self) -> bool:
        return all(c["ok"] for c in self.checks)

    @property
    def overall(self) -> str:
        return "accept" if self.accepted else "reject"

    def first_failure(self) -> Optional[dict]:
        for c in self.checks:
            if not c["ok"]:
                return c
        return None

    def to_dict(self) -> dict:
        return {"overall": self.overall, "checks": self.checks}


def verify_presentation(
    presentation: dict,
    request: dict,
    ledger: LedgerState,
    nonce_fresh: bool = True,
) -> VerificationReport:
    """Full check sequence with a human-readable trace line per check."""
    report = VerificationReport()
    report.add(
        "nonce-freshness",
        nonce_fresh and presentation.get("nonce") == request["nonce"],
        "presentation answers this request's single-use nonce"
        if nonce_fresh and presentation.get("nonce") == request["nonce"]
        else "nonce missing, mismatched, or already used",
    )

    entries = {e["cred_def_id"]: e for e in presentation.get("credentials", [])}
    roots = b""
    for item in request["requested"]:
        cred_def_id = item["cred_def_id"]
        entry = entries.get(cred_def_id)
        if not report.add(
            f"coverage:{cred_def_id}",
            entry is not None,
            "a credential entry answers this request item"
            if entry
            else "requested credential missing from presentation",
        ):
            continue
        roots += bytes.fromhex(entry["merkle_root"])

        cred_def = ledger.query_cred_def(cred_def_id)
        issuer_nym = ledger.query_nym(cred_def["issuer_did"]) if cred_def else None
        report.add(
            f"issuer-registration:{cred_def_id}",
            issuer_nym is not None,
            f"credential definition and issuer NYM found on ledger (height {ledger.height})"
            if issuer_nym
            else "credential definition or issuer NYM not on ledger",
        )
        if issuer_nym is None:
            continue

        issuer_vk = bytes.fromhex(issuer_nym["verification_key"])
        sig_ok = crypto.verify(
            issuer_vk,
            credential_signing_bytes(
                cred_def_id, entry["revocation_handle"], entry["merkle_root"], entry["anchors"]
            ),
            bytes.fromhex(entry["issuer_signature"]),
        )
        report.add(
            f"issuer-signature:{cred_def_id}",
            sig_ok,
            "issuer signature covers the commitment root and anchors"
            if sig_ok
            else "issuer signature does not verify",
        )

        revealed = {r["name"]: r for r in entry.get("revealed", [])}
        for name in item.get("reveal", []):
            rec = revealed.get(name)
            ok = False
            detail = "requested disclosure missing"
            if rec is not None:
                try:
                    leaf = crypto.commit_attribute(
                        name, rec["value"], bytes.fromhex(rec["salt"])
                    ).digest
                    ok = crypto.merkle_verify(
                        bytes.fromhex(entry["merkle_root"]), leaf, path_from_wire(rec["path"])
                    )
                    detail = (
                        f"opening of '{name}' recommits and Merkle-verifies against the signed root"
                        if ok
                        else f"opening of '{name}' does not match the signed root"
                    )
                except (KeyError, ValueError, crypto.CryptoError):
                    detail = f"malformed opening for '{name}'"
            report.add(f"disclosure:{name}", ok, detail)

        anchors = {a["attr_name"]: a for a in entry.get("anchors", [])}
        proofs = {p["attr"]: p for p in entry.get("predicate_proofs", [])}
        for attr, op, threshold in item.get("predicates", []):
            proof = proofs.get(attr)
            anchor = anchors.get(attr)
            ok = False
            detail = "predicate proof missing"
            if proof is not None and anchor is not None and op == ">=":
                if proof["threshold"] != threshold:
                    detail = "proof answers a different threshold"
                else:
                    ok = crypto.threshold_verify(
                        ChainAnchor(attr, anchor["v_max"], bytes.fromhex(anchor["anchor"])),
                        threshold,
                        bytes.fromhex(proof["proof"]),
                    )
                    detail = (
                        f"hash-chain proof shows {attr} >= {threshold} without revealing the value"
                        if ok
                        else f"hash-chain proof for {attr} >= {threshold} does not reach the anchor"
                    )
            report.add(f"predicate:{attr}>={threshold}", ok, detail)

        registry_id = cred_def.get("revoc_reg_id")
        try:
            revoked = ledger.query_revoked(registry_id, entry["revocation_handle"])
            report.add(
                f"revocation:{cred_def_id}",
                not revoked,
                f"revocation handle absent from registry at height {ledger.height}"
                if not revoked
                else f"credential revoked (registry {registry_id})",
            )
        except KeyError:
            report.add(f"revocation:{cred_def_id}", False, "revocation registry not on ledger")

    try:
        bind_ok = crypto.verify(
            bytes.fromhex(presentation["binding_key"]),
            BIND_SIG_TAG + bytes.fromhex(presentation["nonce"]) + roots,
            bytes.fromhex(presentation["binding_signature"]),
        )
    except (KeyError, ValueError):
        bind_ok = False
    report.add(
        "holder-binding",
        bind_ok,
        "fresh holder key binds the presentation to this nonce"
        if bind_ok
        else "holder binding signature invalid",
    )
    return report


# ---------------------------------------------------------------------------
# Protocol roles: issuer / holder / verifier over agent connections
# ---------------------------------------------------------------------------
# One agent can hold several capabilities (a researcher holds its ethics
# credential, verifies eligibility presentations, and issues rewards), so the
# protocol handlers dispatch on message type to whichever capability applies.

def _capability(agent: Agent, name: str):
    cap = getattr(agent, name, None)
    if cap is None:
        raise AgentError(f"agent has no {name} capability")
    return cap


def _issue_protocol(agent: Agent, sender_vk, msg: ProtocolMessage) -> list[Envelope]:
    if msg.type in ("offer", "issue"):
        return _capability(agent, "holder")._handle_issue(agent, sender_vk, msg)
    if msg.type == "request":
        return _capability(agent, "issuer")._handle_request(agent, sender_vk, msg)
    raise AgentError(f"unknown issue/1 message type {msg.type}")


def _present_protocol(agent: Agent, sender_vk, msg: ProtocolMessage) -> list[Envelope]:
    if msg.type == "request":
        return _capability(agent, "holder")._handle_present(agent, sender_vk, msg)
    if msg.type in ("presentation", "refusal"):
        return _capability(agent, "verifier")._handle_response(agent, sender_vk, msg)
    raise AgentError(f"unknown present/1 message type {msg.type}")


class CredentialIssuer:
    """Issuer capability for an agent with a public DID and a ledger client."""

    def __init__(self, agent: Agent, ledger_client, public_did: str, public_keys: KeyPair) -> None:
        self.agent = agent
        self.ledger_client = ledger_client
        self.public_did = public_did
        self.public_keys = public_keys
        self.schemas: dict[str, Schema] = {}
        self.cred_defs: dict[str, dict] = {}
        self.issued: list[dict] = []
        self._pending: dict[str, dict] = {}
        agent.issuer = self
        agent.handlers["issue/1"] = _issue_protocol

    def _tx(self, kind: str, payload: dict) -> LedgerTransaction:
        tx = LedgerTransaction(kind, self.public_did, payload, self.agent.rng.randbytes(16).hex())
        return tx.signed(self.public_keys.signing_key)

    def define_schema(self, name: str, version: str, attrs: list[AttributeSpec]) -> Schema:
        schema = make_schema(self.public_did, name, version, attrs)
        self.ledger_client.submit_and_wait(self._tx("SCHEMA", schema.schema_payload()))
        self.schemas[schema.id] = schema
        return schema

    def publish_cred_def(self, schema_id: str) -> str:
        schema = self.schemas.get(schema_id)
        if schema is None:
            raise IssuanceError(f"unknown schema {schema_id}")
        cred_def_id = f"{self.public_did}:cd:{schema_id}"
        registry_id = f"{cred_def_id}:revreg"
        payload = {
            "id": cred_def_id,
            "schema_id": schema_id,
            "issuer_did": self.public_did,
            "verification_key": self.public_keys.verification_key.hex(),
            "v_max": schema.v_max_map(),
            "revoc_reg_id": registry_id,
        }
        self.ledger_client.submit_and_wait(self._tx("CRED_DEF", payload))
        self.ledger_client.submit_and_wait(
            self._tx("REVOC_REG_DEF", {"id": registry_id, "cred_def_id": cred_def_id})
        )
        self.cred_defs[cred_def_id] = payload
        return cred_def_id

    def offer_credential(self, conn_id: str, cred_def_id: str, values: dict[str, object]) -> str:
        """Start the offer -> request -> issue flow; returns the thread id."""
        cred_def = self.cred_defs.get(cred_def_id)
        if cred_def is None:
            raise IssuanceError(f"unknown cred def {cred_def_id}")
        schema = self.schemas[cred_def["schema_id"]]
        for spec in schema.attrs:
            if spec.name in values:
                spec.canonical_value(values[spec.name])  # fail fast on bad values
        thread_id = self.agent.new_message_id()
        self._pending[thread_id] = {"conn_id": conn_id, "cred_def_id": cred_def_id, "values": values}
        self.agent.send(
            conn_id,
            "issue/1",
            "offer",
            thread_id,
            {"cred_def_id": cred_def_id, "attr_names": schema.attr_names()},
        )
        return thread_id

    def revoke(self, credential_serial_hex: str, cred_def_id: str) -> None:
        registry_id = self.cred_defs[cred_def_id]["revoc_reg_id"]
        handle = revocation_handle(bytes.fromhex(credential_serial_hex))
        self.ledger_client.submit_and_wait(
            self._tx("REVOC_REG_ENTRY", {"registry_id": registry_id, "handles": [handle]})
        )

    def _handle_request(self, agent: Agent, sender_vk, msg: ProtocolMessage) -> list[Envelope]:
        pending = self._pending.pop(msg.thread_id, None)
        if pending is None or not msg.body.get("accept"):
            raise AgentError("no pending offer for this thread")
        cred_def = self.cred_defs[pending["cred_def_id"]]
        schema = self.schemas[cred_def["schema_id"]]
        credential, tokens = build_credential(
            schema,
            pending["cred_def_id"],
            pending["values"],
            self.public_keys,
            agent.rng,
            ledger_height=self.ledger_client.state.height,
        )
        self.issued.append(
            {"cred_def_id": pending["cred_def_id"], "serial": credential["serial"],
             "values": pending["values"], "thread": msg.thread_id}
        )
        agent.event("credential-issued", cred_def=pending["cred_def_id"], thread=msg.thread_id)
        agent.send(
            pending["conn_id"],
            "issue/1",
            "issue",
            msg.thread_id,
            {"credential": credential, "holder_tokens": tokens,
             "schema": schema.schema_payload(), "v_max": schema.v_max_map()},
        )
        return []


class CredentialHolder:
    """Holder capability: stores verified credentials, answers presentation
    requests subject to an approval hook."""

    def __init__(self, agent: Agent, ledger_view: Callable[[], LedgerState]) -> None:
        self.agent = agent
        self.ledger_view = ledger_view
        self.schemas: dict[str, Schema] = {}
        # hook(request) -> None to answer; raise Declined to refuse
        self.approval_hook: Callable[[dict], None] = lambda request: None
        self.category_hook: Callable[[dict], str] = lambda cred: "credential"
        # acceptance_hook may raise AgentError to refuse a credential before it
        # is stored; stored_hook fires after a credential lands in the wallet
        self.acceptance_hook: Callable[[dict], None] = lambda cred: None
        self.stored_hook: Callable[[dict], None] = lambda cred: None
        # when set, sees every inbound presentation request first; returning a
        # list short-circuits the default answer path
        self.request_interceptor: Optional[
            Callable[[Agent, bytes, ProtocolMessage], Optional[list[Envelope]]]
        ] = None
        agent.holder = self
        agent.handlers["issue/1"] = _issue_protocol
        agent.handlers["present/1"] = _present_protocol

    def _handle_issue(self, agent: Agent, sender_vk, msg: ProtocolMessage) -> list[Envelope]:
        if msg.type == "offer":
            conn = agent.wallet.connection_by_their_vk(sender_vk.hex())
            agent.send(conn["conn_id"], "issue/1", "request", msg.thread_id, {"accept": True})
            return []
        if msg.type == "issue":
            credential = msg.body["credential"]
            ledger = self.ledger_view()
            cred_def = ledger.query_cred_def(credential["cred_def_id"])
            issuer_nym = ledger.query_nym(cred_def["issuer_did"]) if cred_def else None
            if issuer_nym is None:
                raise AgentError("issuer not anchored on ledger; credential refused")
            schema = Schema.from_ledger(msg.body["schema"], cred_def)
            if not verify_stored_credential(
                credential, bytes.fromhex(issuer_nym["verification_key"])
            ):
                raise AgentError("credential failed holder verification; not stored")
            self.acceptance_hook(credential)
            record = dict(credential)
            record["category"] = self.category_hook(credential)
            agent.wallet.data["credentials"].append(record)
            agent.wallet.data["holder_tokens"][credential["serial"]] = msg.body["holder_tokens"]
            self.schemas[schema.id] = schema
            agent.event("credential-stored", cred_def=credential["cred_def_id"],
                        category=record["category"], thread=msg.thread_id)
            self.stored_hook(record)
            return []
        raise AgentError(f"holder got unexpected issue/1 message {msg.type}")

    def _handle_present(self, agent: Agent, sender_vk, msg: ProtocolMessage) -> list[Envelope]:
        if self.request_interceptor is not None:
            out = self.request_interceptor(agent, sender_vk, msg)
            if out is not None:
                return out
        request = msg.body["request"]
        conn = agent.wallet.connection_by_their_vk(sender_vk.hex())
        try:
            self.approval_hook(request)
            presentation = create_presentation(agent.wallet, request, agent.rng)
        except Declined:
            agent.send(conn["conn_id"], "present/1", "refusal", msg.thread_id, {"reason": "declined"})
            return []
        except CannotSatisfy as exc:
            agent.send(conn["conn_id"], "present/1", "refusal", msg.thread_id,
                       {"reason": "cannot-satisfy", "detail": str(exc)})
            return []
        except NotHeld as exc:
            agent.send(conn["conn_id"], "present/1", "refusal", msg.thread_id,
                       {"reason": "not-held", "detail": str(exc)})
            return []
        agent.event("presentation-sent", thread=msg.thread_id, purpose=request.get("purpose_id"))
        agent.send(conn["conn_id"], "present/1", "presentation", msg.thread_id,
                   {"presentation": presentation})
        return []

    def credentials(self, category: str | None = None) -> list[dict]:
        creds = self.agent.wallet.data["credentials"]
        return [c for c in creds if category is None or c.get("category") == category]


class PresentationVerifier:
    """Verifier capability: issues single-use nonces, collects reports."""

    def __init__(self, agent: Agent, ledger_view: Callable[[], LedgerState]) -> None:
        self.agent = agent
        self.ledger_view = ledger_view
        self.pending: dict[str, dict] = {}
        self.reports: dict[str, VerificationReport] = {}
        self.refusals: dict[str, dict] = {}
        self.presentations: dict[str, dict] = {}
        self.used_nonces: set[str] = set()
        # optional reactions, keyed by the request thread
        self.on_report: Callable[[str, VerificationReport], None] = lambda thread, report: None
        self.on_refusal: Callable[[str, dict], None] = lambda thread, body: None
        agent.verifier = self
        agent.handlers["present/1"] = _present_protocol

    def request_presentation(self, conn_id: str, requested: list[dict], purpose_id: str) -> str:
        request = make_presentation_request(self.agent.rng, requested, purpose_id)
        thread_id = self.agent.new_message_id()
        self.pending[thread_id] = request
        self.agent.wallet.data["issued_nonces"][request["nonce"]] = purpose_id
        self.agent.send(conn_id, "present/1", "request", thread_id, {"request": request})
        return thread_id

    def verify_now(self, presentation: dict, request: dict) -> VerificationReport:
        nonce = presentation.get("nonce", "")
        fresh = (
            nonce in self.agent.wallet.data["issued_nonces"] and nonce not in self.used_nonces
        )
        report = verify_presentation(presentation, request, self.ledger_view(), nonce_fresh=fresh)
        self.used_nonces.add(nonce)
        return report

    def _handle_response(self, agent: Agent, sender_vk, msg: ProtocolMessage) -> list[Envelope]:
        if msg.type == "refusal":
            self.refusals[msg.thread_id] = msg.body
            agent.event("presentation-refused", thread=msg.thread_id, reason=msg.body.get("reason"))
            self.on_refusal(msg.thread_id, msg.body)
            return []
        request = self.pending.get(msg.thread_id)
        if request is None:
            raise AgentError("no outstanding request for this thread")
        presentation = msg.body["presentation"]
        report = self.verify_now(presentation, request)
        self.reports[msg.thread_id] = report
        self.presentations[msg.thread_id] = presentation
        agent.event("presentation-verified", thread=msg.thread_id, overall=report.overall)
        self.on_report(msg.thread_id, report)
        return []
