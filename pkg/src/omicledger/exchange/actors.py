"""The four actors: MYco (biomarker issuer), the Ethics Review Board,
researchers, and data owners — plus the handshake choreography between owner
and researcher.

Terms always come first: a session cannot reach any eligibility or data step
before the owner has seen and accepted the consent terms, and every check the
owner performs keeps its full trace for display.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Optional

from omicledger import crypto
from omicledger.agents import (
    Agent,
    AgentError,
    Envelope,
    MessageRouter,
    ProtocolMessage,
    connect,
    did_from_verification_key,
)
from omicledger.bootstrap import self_nym
from omicledger.credentials import (
    AttributeSpec,
    CannotSatisfy,
    CredentialHolder,
    CredentialIssuer,
    NotHeld,
    PresentationVerifier,
    create_presentation,
)
from omicledger.exchange import handshake as hs
from omicledger.exchange.board import BulletinBoard, cross_check_ethics, ethics_request_items
from omicledger.exchange.models import (
    ORG_TYPES,
    BiomarkerRecord,
    EthicsApplication,
    HandshakeError,
    OwnerSession,
    ResearchProject,
    criteria_hash,
    session_hash,
    terms_hash as compute_terms_hash,
)

DEFAULT_BIOMARKER_ATTRS = [
    AttributeSpec("ldl", "int", precision=1, v_max=100, unit="mmol/L"),
    AttributeSpec("hba1c", "int", precision=1, v_max=200, unit="mmol/mol"),
    AttributeSpec("blood_type", "string"),
]

ETHICS_ATTRS = [
    AttributeSpec("project_id", "string"),
    AttributeSpec("org_type", "string"),
    AttributeSpec("approved_attrs", "string"),
    AttributeSpec("expiry", "int", precision=0, v_max=4096),
    AttributeSpec("reward_cap", "int", precision=0, v_max=10000),
]

REWARD_ATTRS = [
    AttributeSpec("project_id", "string"),
    AttributeSpec("amount", "int", precision=0, v_max=10000),
    AttributeSpec("kind", "string"),
    AttributeSpec("session_hash", "string"),
]


@dataclass
class ExchangeContext:
    """Shared wiring for one simulated world."""

    router: MessageRouter
    ledger: object                      # submit_and_wait(tx) + .state
    rng: random.Random
    clock: Callable[[], int] = lambda: 0
    today: Callable[[], int] = lambda: 0
    on_event: Optional[Callable[[str, dict], None]] = None

    def agent(self, label: str) -> Agent:
        return Agent(
            label,
            random.Random(self.rng.randrange(2**63)),
            self.router,
            clock=self.clock,
            on_event=self.on_event,
        )

    @property
    def ledger_state(self):
        return self.ledger.state


def _category_for(cred_def_id: str) -> str:
    if ":ethics:" in cred_def_id:
        return "ethics"
    if ":reward:" in cred_def_id:
        return "reward"
    return "biomarker"


class _PublicActor:
    """Base for actors with an on-ledger public DID and issuing rights.

    Trust anchors (MYco, the ERB) arrive with genesis-anchored keys; everyone
    else self-registers a NYM.
    """

    def __init__(self, ctx: ExchangeContext, label: str, register_nym: bool = False,
                 keys: crypto.KeyPair | None = None) -> None:
        self.ctx = ctx
        self.agent = ctx.agent(label)
        self.label = label
        self.public_keys = keys or crypto.generate_keypair(self.agent.rng.randbytes(32))
        self.public_did = did_from_verification_key(self.public_keys.verification_key)
        if register_nym:
            ctx.ledger.submit_and_wait(self_nym(self.public_keys, self.agent.rng, role=label))
        self.issuer = CredentialIssuer(self.agent, ctx.ledger, self.public_did, self.public_keys)

    def invite(self) -> dict:
        return self.agent.create_invitation()


# ---------------------------------------------------------------------------
# MYco — biomarker issuer
# ---------------------------------------------------------------------------

class Myco(_PublicActor):
    """Health-data company issuing biomarker credential bundles.

    Supports several bundles (separate schemas and cred-defs); the first one
    is the default for single-bundle worlds.
    """

    def __init__(self, ctx: ExchangeContext, label: str = "myco",
                 bundles: dict[str, list[AttributeSpec]] | None = None,
                 register_nym: bool = False, keys: crypto.KeyPair | None = None) -> None:
        super().__init__(ctx, label, register_nym=register_nym, keys=keys)
        self.bundle_specs = bundles or {"biomarkers": list(DEFAULT_BIOMARKER_ATTRS)}
        self.bundles: dict[str, dict] = {}

    def setup(self) -> str:
        for name, attrs in self.bundle_specs.items():
            schema = self.issuer.define_schema(name, "1.0", attrs)
            self.bundles[name] = {
                "schema": schema,
                "cred_def_id": self.issuer.publish_cred_def(schema.id),
            }
        return self.cred_def_id

    @property
    def _default_bundle(self) -> str:
        return next(iter(self.bundles))

    @property
    def schema(self):
        return self.bundles[self._default_bundle]["schema"]

    @property
    def cred_def_id(self) -> str:
        return self.bundles[self._default_bundle]["cred_def_id"]

    def bundle_cred_def(self, bundle: str | None = None) -> str:
        return self.bundles[bundle or self._default_bundle]["cred_def_id"]

    def issue_biomarkers(self, conn_id: str, records: list[BiomarkerRecord],
                         bundle: str | None = None) -> None:
        """One credential bundle committing the given records."""
        if not records:
            raise ValueError("no biomarker records to issue")
        schema = self.bundles[bundle or self._default_bundle]["schema"]
        values: dict[str, object] = {}
        for record in records:
            spec = schema.spec(record.name)  # raises on unknown biomarker
            if spec.unit and record.unit != spec.unit:
                raise ValueError(
                    f"{record.name}: unit {record.unit!r} does not match schema unit {spec.unit!r}"
                )
            values[record.name] = record.value
        self.issuer.offer_credential(conn_id, self.bundle_cred_def(bundle), values)
        self.ctx.router.pump()


# ---------------------------------------------------------------------------
# Ethics Review Board
# ---------------------------------------------------------------------------

def default_review_policy(application: EthicsApplication, reward_cap: int) -> tuple[bool, str]:
    """Approve small honoraria for well-formed applications."""
    if application.org_type not in ORG_TYPES:
        return False, f"unknown-org-type:{application.org_type}"
    criteria = application.criteria or {}
    if not criteria.get("reveals") and not criteria.get("predicates"):
        return False, "empty-criteria"
    if application.reward.get("kind") != "honorarium":
        return False, "reward-not-honorarium"
    if int(application.reward.get("amount", 0)) > reward_cap:
        return False, "reward-exceeds-cap"
    return True, ""


class EthicsBoard(_PublicActor):
    def __init__(
        self,
        ctx: ExchangeContext,
        label: str = "erb",
        reward_cap: int = 50,
        validity_days: int = 365,
        policy: Callable[[EthicsApplication, int], tuple[bool, str]] = default_review_policy,
        register_nym: bool = False,
        keys: crypto.KeyPair | None = None,
    ) -> None:
        super().__init__(ctx, label, register_nym=register_nym, keys=keys)
        self.reward_cap = reward_cap
        self.validity_days = validity_days
        self.policy = policy
        self.ethics_cred_def_id = ""
        self._certificates: dict[str, dict] = {}  # project_id -> {serial, application}

    def setup(self) -> str:
        schema = self.issuer.define_schema("ethics", "1.0", ETHICS_ATTRS)
        self.ethics_cred_def_id = self.issuer.publish_cred_def(schema.id)
        return self.ethics_cred_def_id

    def review(self, application: EthicsApplication) -> tuple[bool, str]:
        return self.policy(application, self.reward_cap)

    def issue_certificate(self, conn_id: str, application: EthicsApplication,
                          validity_days: int | None = None) -> None:
        approved, reason = self.review(application)
        if not approved:
            raise ValueError(f"application rejected: {reason}")
        values = {
            "project_id": application.project_id,
            "org_type": application.org_type,
            "approved_attrs": criteria_hash(application.criteria),
            "expiry": self.ctx.today() + (validity_days if validity_days is not None
                                          else self.validity_days),
            "reward_cap": self.reward_cap,
        }
        self.issuer.offer_credential(conn_id, self.ethics_cred_def_id, values)
        self.ctx.router.pump()
        issued = self.issuer.issued[-1]
        self._certificates[application.project_id] = {
            "serial": issued["serial"],
            "application": application.to_dict(),
        }

    def revoke_certificate(self, project_id: str) -> None:
        cert = self._certificates.get(project_id)
        if cert is None:
            raise ValueError(f"no certificate on record for {project_id}")
        self.issuer.revoke(cert["serial"], self.ethics_cred_def_id)


# ---------------------------------------------------------------------------
# Researcher
# ---------------------------------------------------------------------------

@dataclass
class ResearcherSession:
    """Researcher-side mirror of one handshake."""

    session_id: str
    conn_id: str
    project_id: str
    state: str = "CONNECTED"
    eligibility_thread: str = ""
    consent: Optional[dict] = None
    package_report: Optional[dict] = None
    received_package: Optional[dict] = None
    reward_sent: bool = False
    abort_reason: str = ""


class Researcher(_PublicActor):
    def __init__(self, ctx: ExchangeContext, label: str = "researcher") -> None:
        super().__init__(ctx, label, register_nym=True)
        self.holder = CredentialHolder(self.agent, lambda: ctx.ledger_state)
        self.holder.category_hook = lambda cred: _category_for(cred["cred_def_id"])
        self.verifier = PresentationVerifier(self.agent, lambda: ctx.ledger_state)
        self.verifier.on_report = self._on_eligibility_report
        self.verifier.on_refusal = self._on_eligibility_refusal
        self.agent.handlers["handshake/1"] = _researcher_handshake
        self.agent.researcher_actor = self
        self.reward_cred_def_id = ""
        self.projects: dict[str, ResearchProject] = {}
        self.sessions: dict[str, ResearcherSession] = {}
        self.erb_conn = ""
        self.eligibility_overreach: Optional[dict] = None  # test hook

    def setup_rewards(self) -> str:
        schema = self.issuer.define_schema("reward", "1.0", REWARD_ATTRS)
        self.reward_cred_def_id = self.issuer.publish_cred_def(schema.id)
        return self.reward_cred_def_id

    def connect_to_erb(self, erb: EthicsBoard) -> None:
        self.erb_conn = connect(erb.agent, self.agent)

    def apply_for_ethics(self, erb: EthicsBoard, project: ResearchProject,
                         validity_days: int | None = None) -> tuple[bool, str]:
        application = EthicsApplication(
            researcher_did=self.public_did,
            project_id=project.project_id,
            protocol_summary=project.plain_language_purpose,
            org_type=project.org_type,
            criteria=project.criteria,
            reward=project.reward,
        )
        approved, reason = erb.review(application)
        if not approved:
            return False, reason
        erb.issue_certificate(self.erb_conn, application, validity_days=validity_days)
        project.ethics_cred_def_id = erb.ethics_cred_def_id
        self.projects[project.project_id] = project
        return True, ""

    def publish(self, board: BulletinBoard, project: ResearchProject) -> str:
        request = board.publication_request(project.advert())
        presentation = create_presentation(self.agent.wallet, request, self.agent.rng)
        advert_id = board.publish(
            project.advert(), presentation, request, invitation_factory=self.invite
        )
        self.agent.event("project-published", project=project.project_id, advert=advert_id)
        return advert_id

    # -- handshake (researcher side) -----------------------------------------

    def session_for_thread(self, session_id: str) -> ResearcherSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise AgentError(f"no researcher session {session_id}")
        return session

    def _session_by_eligibility_thread(self, thread_id: str) -> Optional[ResearcherSession]:
        for session in self.sessions.values():
            if session.eligibility_thread == thread_id:
                return session
        return None

    def _on_eligibility_report(self, thread_id: str, report) -> None:
        session = self._session_by_eligibility_thread(thread_id)
        if session is None:
            return
        if report.accepted:
            session.state = "ELIGIBILITY_VERIFIED"
            self.agent.event("eligibility-verified", session=session.session_id)
            self.agent.send(session.conn_id, "handshake/1", "eligibility-result",
                            session.session_id, {"accepted": True})
        else:
            session.state, session.abort_reason = "ABORTED", "eligibility-proof-invalid"
            self.agent.send(session.conn_id, "handshake/1", "eligibility-result",
                            session.session_id,
                            {"accepted": False, "reason": "eligibility-proof-invalid"})

    def _on_eligibility_refusal(self, thread_id: str, body: dict) -> None:
        session = self._session_by_eligibility_thread(thread_id)
        if session is None:
            return
        # the researcher learns only that the criteria were not met (or declined)
        session.state = "ABORTED"
        session.abort_reason = "ineligible" if body.get("reason") == "cannot-satisfy" else "declined"
        self.agent.event("session-aborted", session=session.session_id,
                         reason=session.abort_reason)

    def send_reward(self, session_id: str) -> None:
        """Issue the honorarium credential; refused unless transfer is acked."""
        session = self.session_for_thread(session_id)
        if session.state != "DATA_TRANSFERRED":
            raise HandshakeError(
                f"reward refused: session {session_id} is {session.state}, not DATA_TRANSFERRED"
            )
        if session.reward_sent:
            raise HandshakeError("reward already issued for this session")
        project = self.projects[session.project_id]
        self.issuer.offer_credential(
            session.conn_id,
            self.reward_cred_def_id,
            {
                "project_id": session.project_id,
                "amount": int(project.reward["amount"]),
                "kind": project.reward.get("kind", "honorarium"),
                "session_hash": session_hash(session_id),
            },
        )
        session.reward_sent = True
        self.ctx.router.pump()


def _researcher_handshake(agent: Agent, sender_vk, msg: ProtocolMessage) -> list[Envelope]:
    actor: Researcher = agent.researcher_actor
    session_id = msg.thread_id
    conn = agent.wallet.connection_by_their_vk(sender_vk.hex())
    if conn is None:
        raise AgentError("handshake message from unknown connection")

    if msg.type == "init":
        project = actor.projects.get(msg.body.get("project_id", ""))
        if project is None:
            raise AgentError(f"unknown project {msg.body.get('project_id')!r}")
        actor.sessions[session_id] = ResearcherSession(
            session_id=session_id, conn_id=conn["conn_id"], project_id=project.project_id
        )
        agent.send(
            conn["conn_id"],
            "handshake/1",
            "terms",
            session_id,
            {
                "advert": project.advert(),
                "consent_terms": project.consent_terms,
                "terms_hash": project.terms_hash,
            },
        )
        actor.sessions[session_id].state = "TERMS_SENT"
        return []

    session = actor.session_for_thread(session_id)

    if msg.type == "ethics-request":
        request = msg.body["request"]
        try:
            presentation = create_presentation(agent.wallet, request, agent.rng)
        except (NotHeld, CannotSatisfy) as exc:
            agent.send(conn["conn_id"], "handshake/1", "abort", session_id,
                       {"reason": f"no-usable-certificate: {exc}"})
            session.state, session.abort_reason = "ABORTED", str(exc)
            return []
        agent.send(conn["conn_id"], "handshake/1", "ethics-presentation", session_id,
                   {"presentation": presentation})
        return []

    if msg.type == "eligibility-ready":
        project = actor.projects[session.project_id]
        criteria = actor.eligibility_overreach or project.criteria  # hook: over-ask
        requested = [
            {
                "cred_def_id": project.criteria_cred_def_id,
                "reveal": criteria.get("eligibility_reveals", []),
                "predicates": criteria.get("predicates", []),
            }
        ]
        session.eligibility_thread = actor.verifier.request_presentation(
            conn["conn_id"], requested, purpose_id=session.project_id
        )
        return []

    if msg.type == "consent":
        consent = msg.body["consent"]
        project = actor.projects[session.project_id]
        if not hs.verify_consent(consent, expected_owner_vk=conn["their_vk"]):
            raise AgentError("consent signature invalid")
        if consent["terms_hash"] != project.terms_hash:
            raise AgentError("consent cites different terms")
        if not set(consent["selected"]) <= set(project.criteria.get("reveals", [])):
            raise AgentError("consent selects attributes outside the requested set")
        my_keys = agent.wallet.keypair(conn["my_vk"])
        receipt = hs.countersign_consent(consent, my_keys)
        session.consent = consent
        session.state = "CONSENTED"
        agent.wallet.data["consents"].append({**consent, "receipt": receipt})
        agent.event("consent-countersigned", session=session_id)
        agent.send(conn["conn_id"], "handshake/1", "consent-receipt", session_id,
                   {"receipt": receipt})
        return []

    if msg.type == "data-package":
        package = msg.body["package"]
        project = actor.projects[session.project_id]
        if session.consent is None:
            raise AgentError("package before consent")
        report = hs.verify_data_package(
            package,
            expected_purpose_id=session.project_id,
            expected_terms_hash=project.terms_hash,
            consented_attrs=session.consent["selected"],
            ledger=actor.ctx.ledger_state,
        )
        session.package_report = report.to_dict()
        if not report.accepted:
            failure = report.first_failure()
            agent.send(conn["conn_id"], "handshake/1", "transfer-reject", session_id,
                       {"reason": f"{failure['name']}: {failure['detail']}"})
            session.state, session.abort_reason = "ABORTED", failure["name"]
            return []
        session.received_package = package
        session.state = "DATA_TRANSFERRED"
        my_keys = agent.wallet.keypair(conn["my_vk"])
        agent.event("transfer-acked", session=session_id)
        agent.send(conn["conn_id"], "handshake/1", "transfer-ack", session_id,
                   {"ack": hs.ack_signature(package, my_keys)})
        return []

    if msg.type == "reward-ack":
        session.state = "REWARDED"
        agent.event("session-rewarded", session=session_id)
        return []

    if msg.type == "abort":
        session.state = "ABORTED"
        session.abort_reason = msg.body.get("reason", "")
        agent.event("session-aborted", session=session_id, reason=session.abort_reason)
        return []

    raise AgentError(f"unknown handshake message {msg.type}")


# ---------------------------------------------------------------------------
# Data owner
# ---------------------------------------------------------------------------

class DataOwner:
    def __init__(self, ctx: ExchangeContext, label: str, passphrase: str = "") -> None:
        self.ctx = ctx
        self.agent = ctx.agent(label)
        self.label = label
        self.passphrase = passphrase or f"{label}-passphrase"
        self.holder = CredentialHolder(self.agent, lambda: ctx.ledger_state)
        self.holder.category_hook = lambda cred: _category_for(cred["cred_def_id"])
        self.holder.acceptance_hook = self._accept_credential
        self.holder.stored_hook = self._credential_stored
        self.holder.request_interceptor = self._intercept_presentation_request
        self.verifier = PresentationVerifier(self.agent, lambda: ctx.ledger_state)
        self.agent.handlers["handshake/1"] = _owner_handshake
        self.agent.owner_actor = self
        self.sessions: dict[str, OwnerSession] = {}
        self.myco_conn = ""

    # -- issuance ----------------------------------------------------

    def connect_to_myco(self, myco: Myco) -> str:
        self.myco_conn = connect(myco.agent, self.agent)
        return self.myco_conn

    def request_biomarkers(self, myco: Myco, records: list[BiomarkerRecord],
                           bundle: str | None = None) -> None:
        if not self.myco_conn:
            self.connect_to_myco(myco)
        myco.issue_biomarkers(self.myco_conn, records, bundle=bundle)

    def credentials(self, category: str | None = None) -> list[dict]:
        return self.holder.credentials(category)

    def rewards(self) -> list[dict]:
        return self.holder.credentials("reward")

    # -- reward gatekeeping ----------------------------------------------------

    def _session_for_reward(self, credential: dict) -> Optional[OwnerSession]:
        values = {a["name"]: a["value"] for a in credential["attrs"]}
        return next(
            (s for s in self.sessions.values()
             if session_hash(s.session_id) == values.get("session_hash")),
            None,
        )

    def _accept_credential(self, credential: dict) -> None:
        """Reward credentials must cite an acked session and respect the cap."""
        if _category_for(credential["cred_def_id"]) != "reward":
            return
        values = {a["name"]: a["value"] for a in credential["attrs"]}
        session = self._session_for_reward(credential)
        if session is None:
            raise AgentError("reward does not cite any of my sessions")
        if session.state != "DATA_TRANSFERRED":
            raise AgentError(f"reward refused: session is {session.state}")
        if session.advert["project_id"] != values.get("project_id"):
            raise AgentError("reward cites a different project")
        amount = int(values.get("amount", "0"))
        if session.reward_cap is not None and amount > int(session.reward_cap):
            raise AgentError(
                f"reward {amount} exceeds the ethics-approved cap {session.reward_cap}"
            )

    def _credential_stored(self, credential: dict) -> None:
        if credential.get("category") != "reward":
            return
        session = self._session_for_reward(credential)
        if session is None:
            return
        values = {a["name"]: a["value"] for a in credential["attrs"]}
        session.reward = {
            "amount": int(values["amount"]),
            "kind": values.get("kind", ""),
            "project_id": values.get("project_id", ""),
        }
        session.advance("REWARDED", at=self.ctx.clock())
        self.agent.event("reward_issued", session=session.session_id,
                         amount=session.reward["amount"])
        self.agent.send(session.conn_id, "handshake/1", "reward-ack",
                        session.session_id, {"ok": True})

    # -- eligibility interception ------------------------------------------------

    def _session_for_purpose(self, purpose_id: str) -> Optional[OwnerSession]:
        candidates = [
            s for s in self.sessions.values()
            if s.advert.get("project_id") == purpose_id and s.state == "ETHICS_VERIFIED"
        ]
        return candidates[-1] if candidates else None

    def _intercept_presentation_request(self, agent: Agent, sender_vk, msg: ProtocolMessage):
        request = msg.body.get("request", {})
        session = self._session_for_purpose(request.get("purpose_id", ""))
        if session is None:
            return None  # not a handshake eligibility request; default path
        conn = agent.wallet.connection_by_their_vk(sender_vk.hex())
        agent.event("eligibility_request", session=session.session_id)
        session.eligibility_request = request

        approved = session.advert.get("criteria", {})
        approved_predicates = {tuple(p) for p in approved.get("predicates", [])}
        asked_predicates = {
            tuple(p) for item in request.get("requested", []) for p in item.get("predicates", [])
        }
        asked_reveals = [
            name for item in request.get("requested", []) for name in item.get("reveal", [])
        ]
        if asked_reveals or not asked_predicates <= approved_predicates:
            # researcher asked beyond the ethics-approved set
            self.abort(session.session_id, "over-reach")
            return []
        try:
            presentation = create_presentation(agent.wallet, request, agent.rng)
        except (CannotSatisfy, NotHeld):
            session.abort("ineligible", at=self.ctx.clock())
            agent.event("session-aborted", session=session.session_id, reason="ineligible")
            agent.send(conn["conn_id"], "present/1", "refusal", msg.thread_id,
                       {"reason": "cannot-satisfy"})
            return []
        agent.event("eligibility-presentation-sent", session=session.session_id)
        agent.send(conn["conn_id"], "present/1", "presentation", msg.thread_id,
                   {"presentation": presentation})
        return []

    # -- handshake drivers (the owner-facing step API) ------------------------

    def browse(self, board: BulletinBoard, org_type: str | None = None) -> list[dict]:
        return board.discover(org_type)

    def start_handshake(self, board: BulletinBoard, advert_id: str) -> OwnerSession:
        advert = board.advert(advert_id)
        session_id = self.agent.rng.randbytes(16).hex()
        session = OwnerSession(session_id=session_id, advert=advert)
        self.sessions[session_id] = session
        self.agent.event("session-started", session=session_id,
                         project=advert["project_id"], org_type=advert["org_type"])

        invitation = board.connection_invitation(advert_id)
        conn_id = self.agent.accept_invitation(invitation, label=advert["project_id"])
        self.ctx.router.pump()
        if not self.agent.connection_ready(conn_id):
            session.abort("connection-failed", at=self.ctx.clock())
            return session
        session.conn_id = conn_id
        session.advance("CONNECTED", at=self.ctx.clock())
        self.agent.send(conn_id, "handshake/1", "init", session_id,
                        {"project_id": advert["project_id"]})
        self.ctx.router.pump()
        return session

    def verify_ethics(self, session_id: str) -> OwnerSession:
        session = self.sessions[session_id]
        session.require("TERMS_PRESENTED")
        request = {
            "nonce": self.agent.rng.randbytes(16).hex(),
            "requested": ethics_request_items(
                session.advert["ethics_cred_def_id"], self.ctx.today()
            ),
            "purpose_id": f"ethics-check:{session.advert['project_id']}",
        }
        self.agent.wallet.data["issued_nonces"][request["nonce"]] = request["purpose_id"]
        session.ethics_request = request
        self.agent.send(session.conn_id, "handshake/1", "ethics-request", session_id,
                        {"request": request})
        self.ctx.router.pump()
        return session

    def approve_eligibility(self, session_id: str) -> OwnerSession:
        """Explicit owner approval to answer the study criteria."""
        session = self.sessions[session_id]
        session.require("ETHICS_VERIFIED")
        self.agent.send(session.conn_id, "handshake/1", "eligibility-ready", session_id, {})
        self.ctx.router.pump()
        return session

    def decline_eligibility(self, session_id: str) -> OwnerSession:
        session = self.sessions[session_id]
        session.require("ETHICS_VERIFIED")
        return self.abort(session_id, "declined")

    def give_consent(self, session_id: str, selection: list[str]) -> OwnerSession:
        session = self.sessions[session_id]
        session.require("ELIGIBILITY_PROVEN")
        requested = session.advert.get("criteria", {}).get("reveals", [])
        if not set(selection) <= set(requested):
            raise HandshakeError(
                f"selection {sorted(selection)} outside the requested set {sorted(requested)}"
            )
        conn = self.agent.wallet.connection(session.conn_id)
        keys = self.agent.wallet.keypair(conn["my_vk"])
        consent = hs.build_consent(
            session_id=session_id,
            project_id=session.advert["project_id"],
            terms_hash=session.terms_hash,
            selected=selection,
            owner_keys=keys,
            owner_did=conn["my_did"],
            timestamp=self.ctx.clock(),
        )
        session.consent = consent
        session.selected_attrs = sorted(selection)
        self.agent.event("consent_record", session=session_id, selected=sorted(selection))
        self.agent.send(session.conn_id, "handshake/1", "consent", session_id,
                        {"consent": consent})
        self.ctx.router.pump()
        return session

    def transfer_data(self, session_id: str) -> OwnerSession:
        session = self.sessions[session_id]
        session.require("CONSENTED")
        credential = None
        if session.selected_attrs:
            cred_def_id = session.advert["criteria_cred_def_id"]
            credential = next(
                (c for c in self.agent.wallet.data["credentials"]
                 if c["cred_def_id"] == cred_def_id),
                None,
            )
            if credential is None:
                raise HandshakeError(f"no credential held for {cred_def_id}")
        package = hs.build_data_package(
            credential,
            session.selected_attrs,
            purpose_id=session.advert["project_id"],
            terms_hash=session.terms_hash,
            session_id=session_id,
            rng=self.agent.rng,
        )
        session.sent_package = package
        self.agent.event("data_package", session=session_id,
                         attrs=[o["name"] for o in package["openings"]])
        self.agent.send(session.conn_id, "handshake/1", "data-package", session_id,
                        {"package": package})
        self.ctx.router.pump()
        return session

    def abort(self, session_id: str, reason: str) -> OwnerSession:
        session = self.sessions[session_id]
        session.abort(reason, at=self.ctx.clock())
        self.agent.event("session-aborted", session=session_id, reason=reason)
        if session.conn_id:
            self.agent.send(session.conn_id, "handshake/1", "abort", session_id,
                            {"reason": reason})
            self.ctx.router.pump()
        return session


def _owner_handshake(agent: Agent, sender_vk, msg: ProtocolMessage) -> list[Envelope]:
    actor: DataOwner = agent.owner_actor
    session = actor.sessions.get(msg.thread_id)
    if session is None:
        raise AgentError(f"no session {msg.thread_id}")
    session_id = msg.thread_id

    if msg.type == "terms":
        session.require("CONNECTED")
        advertised = session.advert.get("terms_hash")
        presented = msg.body.get("terms_hash")
        if presented != advertised or compute_terms_hash(msg.body.get("consent_terms", "")) != presented:
            actor.abort(session_id, "terms-hash-mismatch")
            return []
        session.terms = msg.body["consent_terms"]
        session.terms_hash = presented
        session.advance("TERMS_PRESENTED", at=actor.ctx.clock())
        agent.event("terms_presented", session=session_id, terms_hash=presented)
        return []

    if msg.type == "ethics-presentation":
        session.require("TERMS_PRESENTED")
        if session.ethics_request is None:
            raise AgentError("no outstanding ethics request")
        presentation = msg.body["presentation"]
        report = actor.verifier.verify_now(presentation, session.ethics_request)
        cross_check_ethics(report, presentation, session.advert)
        session.ethics_report = report.to_dict()
        if not report.accepted:
            failure = report.first_failure()
            actor.abort(session_id, f"ethics-check-failed:{failure['name']}")
            return []
        revealed = {
            r["name"]: r["value"]
            for entry in presentation.get("credentials", [])
            for r in entry.get("revealed", [])
        }
        session.reward_cap = int(revealed.get("reward_cap", "0"))
        session.advance("ETHICS_VERIFIED", at=actor.ctx.clock())
        agent.event("ethics_verified", session=session_id, reward_cap=session.reward_cap)
        return []

    if msg.type == "eligibility-result":
        session.require("ETHICS_VERIFIED")
        if msg.body.get("accepted"):
            session.advance("ELIGIBILITY_PROVEN", at=actor.ctx.clock())
            agent.event("eligibility_proven", session=session_id)
        else:
            session.abort("ineligible", at=actor.ctx.clock())
            agent.event("session-aborted", session=session_id, reason="ineligible")
        return []

    if msg.type == "consent-receipt":
        session.require("ELIGIBILITY_PROVEN")
        conn = agent.wallet.connection(session.conn_id)
        if not hs.verify_countersignature(
            session.consent, msg.body["receipt"], bytes.fromhex(conn["their_vk"])
        ):
            actor.abort(session_id, "bad-consent-receipt")
            return []
        record = dict(session.consent)
        record["receipt"] = msg.body["receipt"]
        agent.wallet.data["consents"].append(record)
        session.advance("CONSENTED", at=actor.ctx.clock())
        agent.event("consented", session=session_id)
        return []

    if msg.type == "transfer-ack":
        session.require("CONSENTED")
        conn = agent.wallet.connection(session.conn_id)
        if session.sent_package is None or not hs.verify_ack(
            session.sent_package, msg.body.get("ack", ""), bytes.fromhex(conn["their_vk"])
        ):
            actor.abort(session_id, "bad-transfer-ack")
            return []
        session.advance("DATA_TRANSFERRED", at=actor.ctx.clock())
        agent.event("transfer_acked", session=session_id)
        return []

    if msg.type == "transfer-reject":
        # consent record is retained in the wallet as evidence
        session.abort(f"transfer-rejected:{msg.body.get('reason', '')}", at=actor.ctx.clock())
        agent.event("session-aborted", session=session_id, reason="transfer-rejected")
        return []

    if msg.type == "abort":
        if session.state != "ABORTED":
            session.abort(msg.body.get("reason", "counterparty-abort"), at=actor.ctx.clock())
            agent.event("session-aborted", session=session_id, reason=session.abort_reason)
        return []

    raise AgentError(f"unknown handshake message {msg.type}")
