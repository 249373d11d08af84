"""Domain records for the four-actor exchange: biomarkers, ethics
applications, research project adverts, and the handshake session."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from omicledger.crypto import canonical_bytes, sha256

ORG_TYPES = ("university", "government", "pharma", "insurer", "other")

# the owner-side consent flow; states only ever advance in this order
SESSION_STATES = (
    "ADVERT_SEEN",
    "CONNECTED",
    "TERMS_PRESENTED",
    "ETHICS_VERIFIED",
    "ELIGIBILITY_PROVEN",
    "CONSENTED",
    "DATA_TRANSFERRED",
    "REWARDED",
)


from omicledger.agents import AgentError


class HandshakeError(AgentError):
    """A handshake step was attempted out of order or with bad inputs.

    Subclasses AgentError so an out-of-order protocol message turns into a
    problem-report with state unchanged instead of crashing the dispatcher.
    """


def criteria_hash(criteria: dict) -> str:
    """Stable digest binding an ethics certificate to an exact criteria set."""
    canonical = {
        "reveals": sorted(criteria.get("reveals", [])),
        "predicates": sorted(
            [list(p) for p in criteria.get("predicates", [])],
            key=lambda p: (p[0], p[2]),
        ),
    }
    return sha256(b"criteria" + canonical_bytes(canonical)).hex()


def terms_hash(consent_terms: str) -> str:
    return sha256(consent_terms.encode("utf-8")).hex()


@dataclass(frozen=True)
class BiomarkerRecord:
    name: str
    value: str       # decimal string, e.g. "3.1"
    unit: str
    measured_at: str = ""


@dataclass(frozen=True)
class EthicsApplication:
    researcher_did: str
    project_id: str
    protocol_summary: str
    org_type: str
    criteria: dict                  # {"reveals": [...], "predicates": [[attr, ">=", t], ...]}
    reward: dict                    # {"kind": "honorarium", "amount": int, "currency_label": str}

    def to_dict(self) -> dict:
        return {
            "researcher_did": self.researcher_did,
            "project_id": self.project_id,
            "protocol_summary": self.protocol_summary,
            "org_type": self.org_type,
            "criteria": self.criteria,
            "reward": self.reward,
        }


@dataclass
class ResearchProject:
    project_id: str
    title: str
    org_type: str
    plain_language_purpose: str
    criteria: dict
    consent_terms: str
    reward: dict
    criteria_cred_def_id: str = ""  # biomarker cred-def the criteria range over
    ethics_cred_def_id: str = ""    # filled once the certificate is issued

    @property
    def terms_hash(self) -> str:
        return terms_hash(self.consent_terms)

    def advert(self) -> dict:
        """The public advert card: requester type and purpose up front."""
        return {
            "project_id": self.project_id,
            "title": self.title,
            "org_type": self.org_type,
            "plain_language_purpose": self.plain_language_purpose,
            "criteria": self.criteria,
            "consent_terms": self.consent_terms,
            "terms_hash": self.terms_hash,
            "reward": self.reward,
            "criteria_cred_def_id": self.criteria_cred_def_id,
            "ethics_cred_def_id": self.ethics_cred_def_id,
        }


@dataclass
class OwnerSession:
    """Data-owner view of one handshake; the normative state machine."""

    session_id: str
    advert: dict
    state: str = "ADVERT_SEEN"
    conn_id: str = ""
    terms: str = ""
    terms_hash: str = ""
    ethics_report: Optional[dict] = None
    ethics_request: Optional[dict] = None
    reward_cap: Optional[int] = None
    eligibility_request: Optional[dict] = None
    consent: Optional[dict] = None
    selected_attrs: list = field(default_factory=list)
    sent_package: Optional[dict] = None
    reward: Optional[dict] = None
    abort_reason: str = ""
    events: list = field(default_factory=list)

    def advance(self, new_state: str, at: int = 0) -> None:
        if self.state == "ABORTED":
            raise HandshakeError(f"session {self.session_id} already aborted")
        if SESSION_STATES.index(new_state) != SESSION_STATES.index(self.state) + 1:
            raise HandshakeError(
                f"illegal transition {self.state} -> {new_state} in session {self.session_id}"
            )
        self.state = new_state
        self.events.append({"time": at, "state": new_state})

    def abort(self, reason: str, at: int = 0) -> None:
        self.state = "ABORTED"
        self.abort_reason = reason
        self.events.append({"time": at, "state": "ABORTED", "reason": reason})

    def require(self, state: str) -> None:
        if self.state != state:
            raise HandshakeError(
                f"session {self.session_id} is {self.state}, step needs {state}"
            )

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "state": self.state,
            "advert": self.advert,
            "terms": self.terms,
            "terms_hash": self.terms_hash,
            "ethics_report": self.ethics_report,
            "reward_cap": self.reward_cap,
            "requested_attrs": (self.advert.get("criteria") or {}).get("reveals", []),
            "selected_attrs": self.selected_attrs,
            "consent": self.consent,
            "reward": self.reward,
            "abort_reason": self.abort_reason,
            "events": self.events,
        }


def session_hash(session_id: str) -> str:
    """Binds a reward credential to one specific handshake session."""
    return sha256(b"session" + session_id.encode("ascii")).hex()
