"""Privacy audits over scenario artifacts.

phi_scan proves the negative the whole design promises: no attribute value,
salt, or package byte ever lands on the ledger or the bulletin board. It works
on registered sentinels (exact fixture values), so a hit is a real leak and an
empty report is meaningful.

unlinkability_audit diff s what two researchers saw of the same owner: the
only tokens they may share are public ledger artifacts — plus the per-
credential constants (revocation handle and friends) when the owner presented
the SAME credential twice, which is reported as the documented limitation
rather than a failure.
"""

from __future__ import annotations

import base64
import json
import re
from dataclasses import dataclass

from omicledger.ledger.records import LedgerState, read_block_log

_DID_RE = re.compile(r"did:omic:[1-9A-HJ-NP-Za-km-z]+")
_HEX_RE = re.compile(r"\b[0-9a-f]{32,128}\b")

# sentinels shorter than this are matched as quoted JSON tokens to avoid
# colliding with hex substrings; longer ones are plain substrings
_TOKEN_SCAN_MAX = 6


@dataclass
class PhiFinding:
    location: str
    sentinel: str
    origin: str
    context: str

    def to_dict(self) -> dict:
        return {
            "location": self.location,
            "sentinel": self.sentinel,
            "origin": self.origin,
            "context": self.context,
        }


def _needle(sentinel: str) -> str:
    return sentinel if len(sentinel) > _TOKEN_SCAN_MAX else f'"{sentinel}"'


def _scan_lines(lines: list[tuple[str, str]], sentinels: dict[str, str]) -> list[PhiFinding]:
    findings = []
    for location, line in lines:
        for sentinel, origin in sentinels.items():
            if _needle(sentinel) in line:
                at = line.find(_needle(sentinel))
                findings.append(
                    PhiFinding(
                        location=location,
                        sentinel=sentinel,
                        origin=origin,
                        context=line[max(0, at - 40) : at + len(sentinel) + 40],
                    )
                )
    return findings


def phi_scan(block_log: str, board_dump: str, sentinels: dict[str, str]) -> list[PhiFinding]:
    """Scan public artifacts for registered personal-data sentinels."""
    lines: list[tuple[str, str]] = []
    for raw in block_log.splitlines():
        if not raw.strip():
            continue
        try:
            height = json.loads(raw).get("height", "?")
        except ValueError:
            height = "?"
        lines.append((f"block:{height}", raw))
    for raw in board_dump.splitlines():
        if not raw.strip():
            continue
        try:
            advert = json.loads(raw).get("advert_id", "?")
        except ValueError:
            advert = "?"
        lines.append((f"board:{advert}", raw))
    return _scan_lines(lines, sentinels)


# ---------------------------------------------------------------------------
# Unlinkability
# ---------------------------------------------------------------------------

@dataclass
class UnlinkabilityReport:
    researchers: list[str]
    visible: dict[str, list[str]]
    intersection: list[str]
    public_artifacts: list[str]
    known_limitation: list[str]
    violations: list[str]

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "researchers": self.researchers,
            "visible_counts": {k: len(v) for k, v in self.visible.items()},
            "visible": self.visible,
            "intersection": self.intersection,
            "public_artifacts": self.public_artifacts,
            "known_limitation": self.known_limitation,
            "violations": self.violations,
            "passed": self.passed,
        }


def _identifiers_in(text: str) -> set[str]:
    return set(_DID_RE.findall(text)) | set(_HEX_RE.findall(text))


def _credential_instance_tokens(payload: dict) -> set[str]:
    """Stable per-credential artifacts that repeat when the SAME credential is
    shown twice: revocation handle, root, issuer signature, anchors, salts,
    Merkle siblings, and the deterministic predicate proof digests. They are
    one linkability family, keyed by the revocation handle."""
    tokens: set[str] = set()

    def walk(obj):
        if isinstance(obj, dict):
            if "revocation_handle" in obj and "merkle_root" in obj:
                tokens.add(obj.get("revocation_handle", ""))
                tokens.add(obj.get("merkle_root", ""))
                tokens.add(obj.get("issuer_signature", ""))
                for anchor in obj.get("anchors", []):
                    tokens.add(anchor.get("anchor", ""))
            if "salt" in obj and "value" in obj:  # a disclosed opening
                tokens.add(obj.get("salt", ""))
                for _, digest in (obj.get("path") or {}).get("siblings", []):
                    tokens.add(digest)
            if "proof" in obj and "threshold" in obj:  # a predicate proof
                tokens.add(obj.get("proof", ""))
            for v in obj.values():
                walk(v)
        elif isinstance(obj, list):
            for v in obj:
                walk(v)

    walk(payload)
    tokens.discard("")
    return tokens


def _board_derived_tokens(board_dump: str) -> set[str]:
    """Digests anyone can compute from the public adverts (criteria hashes,
    which ethics certificates carry as approved_attrs)."""
    from omicledger.exchange.models import criteria_hash

    tokens: set[str] = set()
    for line in board_dump.splitlines():
        if not line.strip():
            continue
        try:
            advert = json.loads(line)
        except ValueError:
            continue
        if isinstance(advert.get("criteria"), dict):
            tokens.add(criteria_hash(advert["criteria"]))
    return tokens


def ledger_public_tokens(state: LedgerState) -> set[str]:
    """Everything legitimately public: DIDs, keys, ids, revocation entries."""
    tokens: set[str] = set()
    for did, nym in state.nym_index.items():
        tokens.add(did)
        tokens.add(nym["verification_key"])
    tokens.update(state.schema_index)
    tokens.update(state.cred_def_index)
    for registry in state.revocation_sets.values():
        tokens.update(registry)
    # ids embed issuer DIDs; the regexes see those as separate tokens too
    for text in list(state.schema_index) + list(state.cred_def_index):
        tokens |= set(_DID_RE.findall(text))
    return tokens


def unlinkability_audit(
    transcript_events: list[dict],
    researchers: list[str],
    ledger_state: LedgerState,
    board_dump: str = "",
) -> UnlinkabilityReport:
    """Diff what each researcher saw; only public artifacts may overlap."""
    visible: dict[str, set[str]] = {r: set() for r in researchers}
    instance_tokens: set[str] = set()
    for event in transcript_events:
        if event.get("kind") != "received":
            continue
        actor = event.get("actor", "")
        if actor not in visible:
            continue
        payload = base64.b64decode(event["payload_b64"]).decode("utf-8", errors="replace")
        visible[actor] |= _identifiers_in(payload)
        try:
            instance_tokens |= _credential_instance_tokens(json.loads(payload))
        except ValueError:
            pass

    sets = list(visible.values())
    intersection = set.intersection(*sets) if len(sets) > 1 else set()
    # the bulletin board is public by construction (and owners never write to
    # it), so its tokens — terms hashes, criteria digests — cannot identify an owner
    public = ledger_public_tokens(ledger_state) | _identifiers_in(board_dump)
    public |= _board_derived_tokens(board_dump)

    public_hits, limitation_hits, violations = [], [], []
    for token in sorted(intersection):
        if token in public:
            public_hits.append(token)
        elif token in instance_tokens:
            limitation_hits.append(token)
        else:
            violations.append(token)

    return UnlinkabilityReport(
        researchers=researchers,
        visible={k: sorted(v) for k, v in visible.items()},
        intersection=sorted(intersection),
        public_artifacts=public_hits,
        known_limitation=limitation_hits,
        violations=violations,
    )


def state_from_block_log(block_log: str) -> LedgerState:
    """Rebuild the ledger state by folding a block log (audit-side replay)."""
    state = LedgerState()
    for block in read_block_log(block_log):
        state.apply_block(block)
    return state
