"""Config-driven end-to-end scenarios: actors on top of a simulated BFT
validator network, with a machine-readable transcript for the privacy audits.

Same config + seed => byte-identical transcript and block log. Everything that
draws randomness draws it (directly or via a derived generator) from the one
seeded root.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from omicledger import crypto
from omicledger.agents import MessageRouter
from omicledger.bootstrap import make_genesis, self_nym
from omicledger.crypto import canonical_bytes, sha256
from omicledger.exchange.actors import (
    AttributeSpec,
    DataOwner,
    EthicsBoard,
    ExchangeContext,
    Myco,
    Researcher,
)
from omicledger.exchange.board import BulletinBoard
from omicledger.exchange.models import BiomarkerRecord, ResearchProject
from omicledger.exchange.recovery import Guardian, configure_recovery, recover_wallet
from omicledger.ledger.records import write_block_log
from omicledger.simnet import BftNetwork

DEFAULT_BUNDLES = {
    "biomarkers": [
        {"name": "ldl", "type": "int", "precision": 1, "v_max": 100, "unit": "mmol/L"},
        {"name": "hba1c", "type": "int", "precision": 1, "v_max": 200, "unit": "mmol/mol"},
        {"name": "blood_type", "type": "string"},
    ],
    "metabolics": [
        {"name": "glucose", "type": "int", "precision": 1, "v_max": 300, "unit": "mmol/L"},
        {"name": "crp", "type": "int", "precision": 1, "v_max": 1000, "unit": "mg/L"},
    ],
}


class Transcript:
    """Append-only, machine-readable event log (audit input)."""

    def __init__(self) -> None:
        self.events: list[dict] = []

    def add(self, kind: str, meta: dict) -> None:
        self.events.append({"seq": len(self.events), "kind": kind, **meta})

    def add_wire(self, wire: dict) -> None:
        self.add("wire", {"actor": "", "time": 0, **wire})

    def digest(self) -> str:
        return sha256(canonical_bytes(self.events)).hex()

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        t = cls()
        t.events = [json.loads(line) for line in text.splitlines() if line.strip()]
        return t


@dataclass
class ScenarioConfig:
    seed: int = 1
    validators: int = 4
    owners: int = 2
    researchers: int = 1
    today: int = 100
    timeout_ticks: int = 12
    max_delay: int = 3
    bundles: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_BUNDLES.items()})
    script: list = field(default_factory=list)
    faults: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "validators": self.validators,
            "owners": self.owners,
            "researchers": self.researchers,
            "today": self.today,
            "timeout_ticks": self.timeout_ticks,
            "max_delay": self.max_delay,
            "bundles": self.bundles,
            "script": self.script,
            "faults": self.faults,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    transcript: Transcript
    block_log: str
    genesis_lines: list[str]
    board_dump: str
    wallets: dict[str, bytes]
    sentinels: dict[str, str]          # sentinel string -> where it came from
    session_outcomes: list[dict]
    ledger_state: object
    ok: bool

    def transcript_digest(self) -> str:
        return self.transcript.digest()

    def block_log_digest(self) -> str:
        return sha256(self.block_log.encode()).hex()

    def write_artifacts(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "transcript.jsonl").write_text(self.transcript.to_jsonl())
        (directory / "blocklog.jsonl").write_text(self.block_log)
        (directory / "genesis.jsonl").write_text("\n".join(self.genesis_lines) + "\n")
        (directory / "board.jsonl").write_text(self.board_dump)
        (directory / "sentinels.json").write_text(json.dumps(self.sentinels, indent=2))
        (directory / "summary.json").write_text(
            json.dumps(
                {
                    "ok": self.ok,
                    "transcript_digest": self.transcript_digest(),
                    "block_log_digest": self.block_log_digest(),
                    "sessions": self.session_outcomes,
                },
                indent=2,
            )
        )
        wallet_dir = directory / "wallets"
        wallet_dir.mkdir(exist_ok=True)
        for label, blob in self.wallets.items():
            (wallet_dir / f"{label}.wallet").write_bytes(blob)


def _attr_specs(raw: list[dict]) -> list[AttributeSpec]:
    return [
        AttributeSpec(
            name=a["name"],
            type=a["type"],
            precision=a.get("precision", 0),
            v_max=a.get("v_max", 0),
            unit=a.get("unit", ""),
        )
        for a in raw
    ]


class ScenarioWorld:
    """All actors plus the validator network for one scenario run."""

    def __init__(self, config: ScenarioConfig) -> None:
        self.config = config
        self.rng = random.Random(config.seed)
        self.transcript = Transcript()
        self.today = config.today
        self.sentinels: dict[str, str] = {}
        self.session_outcomes: list[dict] = []

        myco_keys = crypto.generate_keypair(self.rng.randbytes(32))
        erb_keys = crypto.generate_keypair(self.rng.randbytes(32))
        self.genesis, node_keys = make_genesis(
            self.rng, config.validators, {"myco": myco_keys, "erb": erb_keys}
        )
        self.net = BftNetwork(
            self.genesis,
            node_keys,
            self.rng,
            timeout_ticks=config.timeout_ticks,
            max_delay=config.max_delay,
        )
        for fault in config.faults:
            if fault.get("action") == "crash":
                self.net.crash_at(fault["node"], fault.get("tick", 0))

        self.router = MessageRouter(capture=self.transcript.add_wire)
        self.ctx = ExchangeContext(
            router=self.router,
            ledger=self.net,
            rng=self.rng,
            clock=lambda: self.net.tick,
            today=lambda: self.today,
            on_event=self.transcript.add,
        )
        self.myco = Myco(
            self.ctx,
            bundles={name: _attr_specs(attrs) for name, attrs in config.bundles.items()},
            keys=myco_keys,
        )
        self.myco.setup()
        self.erb = EthicsBoard(self.ctx, keys=erb_keys)
        self.erb.setup()
        self.researchers = {
            f"researcher-{i}": Researcher(self.ctx, f"researcher-{i}")
            for i in range(config.researchers)
        }
        for researcher in self.researchers.values():
            researcher.setup_rewards()
            researcher.connect_to_erb(self.erb)
        self.owners = {
            f"owner-{i}": DataOwner(self.ctx, f"owner-{i}") for i in range(config.owners)
        }
        self.board = BulletinBoard(
            lambda: self.net.state,
            self.rng,
            clock=lambda: self.net.tick,
            today=lambda: self.today,
        )
        self.guardians: dict[str, list[Guardian]] = {}
        self.projects: dict[str, ResearchProject] = {}
        self.adverts: dict[str, str] = {}  # project_id -> advert_id

    # -- script actions ----------------------------------------------------

    def run_script(self) -> None:
        for step in self.config.script:
            action = step["action"]
            handler = getattr(self, f"_do_{action.replace('-', '_')}", None)
            if handler is None:
                raise ValueError(f"unknown scenario action {action!r}")
            handler(step)

    def _do_issue_biomarkers(self, step: dict) -> None:
        owner = self.owners[step["owner"]]
        records = [
            BiomarkerRecord(r["name"], r["value"], r.get("unit", ""), r.get("measured_at", ""))
            for r in step["records"]
        ]
        owner.request_biomarkers(self.myco, records, bundle=step.get("bundle"))
        credential = owner.credentials("biomarker")[-1]
        for attr in credential["attrs"]:
            self.sentinels[attr["value"]] = f"{owner.label}:{attr['name']}:value"
            self.sentinels[attr["salt"]] = f"{owner.label}:{attr['name']}:salt"
        for record in records:
            self.sentinels[record.value] = f"{owner.label}:{record.name}:raw"

    def _do_certify_project(self, step: dict) -> None:
        researcher = self.researchers[step["researcher"]]
        p = step["project"]
        project = ResearchProject(
            project_id=p["project_id"],
            title=p.get("title", p["project_id"]),
            org_type=p["org_type"],
            plain_language_purpose=p.get("purpose", ""),
            criteria=p["criteria"],
            consent_terms=p.get("consent_terms", "Data used for this study only."),
            reward=p.get("reward", {"kind": "honorarium", "amount": 50, "currency_label": "CAD"}),
            criteria_cred_def_id=self.myco.bundle_cred_def(p.get("bundle")),
        )
        ok, reason = researcher.apply_for_ethics(
            self.erb, project, validity_days=step.get("validity_days")
        )
        if not ok:
            raise ValueError(f"ethics application rejected: {reason}")
        self.projects[project.project_id] = project

    def _do_publish_project(self, step: dict) -> None:
        researcher = self.researchers[step["researcher"]]
        project = self.projects[step["project_id"]]
        advert_id = researcher.publish(self.board, project)
        self.adverts[project.project_id] = advert_id

    def _do_handshake(self, step: dict) -> None:
        owner = self.owners[step["owner"]]
        advert_id = self.adverts[step["project_id"]]
        researcher = self.researchers[step.get("researcher", "researcher-0")]
        session = owner.start_handshake(self.board, advert_id)
        sid = session.session_id
        if session.state == "TERMS_PRESENTED":
            owner.verify_ethics(sid)
        if session.state == "ETHICS_VERIFIED":
            if step.get("decline_eligibility"):
                owner.decline_eligibility(sid)
            else:
                owner.approve_eligibility(sid)
        if session.state == "ELIGIBILITY_PROVEN":
            selection = step.get("selection")
            if selection is None:
                selection = session.advert.get("criteria", {}).get("reveals", [])
            owner.give_consent(sid, selection)
        if session.state == "CONSENTED":
            owner.transfer_data(sid)
        if session.state == "DATA_TRANSFERRED":
            researcher.send_reward(sid)
        expect = step.get("expect", "REWARDED")
        outcome = {
            "owner": owner.label,
            "researcher": researcher.label,
            "project_id": step["project_id"],
            "session_id": sid,
            "state": session.state,
            "abort_reason": session.abort_reason,
            "expect": expect,
            "ok": _matches_expectation(session, expect),
        }
        self.session_outcomes.append(outcome)

    def _do_revoke_ethics(self, step: dict) -> None:
        self.erb.revoke_certificate(step["project_id"])

    def _do_crash_node(self, step: dict) -> None:
        self.net.crash_at(step["node"], self.net.tick)
        self.net.step()

    def _do_advance_today(self, step: dict) -> None:
        self.today += int(step["days"])

    def _do_configure_recovery(self, step: dict) -> None:
        owner = self.owners[step["owner"]]
        guardians = [
            Guardian(self.ctx.agent(f"{owner.label}-guardian-{i}"))
            for i in range(step.get("guardians", 3))
        ]
        self.guardians[owner.label] = guardians
        configure_recovery(owner, guardians, k=step.get("k", 2))

    def _do_recover_wallet(self, step: dict) -> None:
        owner = self.owners[step["owner"]]
        guardians = self.guardians[owner.label]
        sealed = owner.agent.wallet.save(owner.passphrase, self.rng)
        shares = [guardians[i].share_for(owner.label) for i in step.get("guardian_indices", [0, 1])]
        restored = recover_wallet(shares, sealed)
        if restored.serialize() != owner.agent.wallet.serialize():
            raise ValueError("recovered wallet differs from the original")
        self.transcript.add("wallet-recovered", {"actor": owner.label, "time": self.net.tick})

    def _do_plant_phi_sentinel(self, step: dict) -> None:
        """Test hook: deliberately commits a sentinel inside a NYM alias."""
        sentinel = step.get("value", "PLANTED-SENTINEL")
        self.sentinels[sentinel] = "planted:control"
        keys = crypto.generate_keypair(self.rng.randbytes(32))
        self.net.submit_and_wait(self_nym(keys, self.rng, role="control", alias=sentinel))

    # -- results ----------------------------------------------------

    def result(self) -> ScenarioResult:
        wallets = {}
        for label, owner in sorted(self.owners.items()):
            wallets[label] = owner.agent.wallet.save(owner.passphrase, self.rng)
        ok = all(o["ok"] for o in self.session_outcomes) if self.session_outcomes else True
        return ScenarioResult(
            config=self.config,
            transcript=self.transcript,
            block_log=write_block_log(self.net.reference_node().chain),
            genesis_lines=self.genesis.to_lines(),
            board_dump=self.board.dump(),
            wallets=wallets,
            sentinels=self.sentinels,
            session_outcomes=self.session_outcomes,
            ledger_state=self.net.state,
            ok=ok,
        )


def _matches_expectation(session, expect: str) -> bool:
    if ":" in expect:
        state, _, reason = expect.partition(":")
        return session.state == state and reason in session.abort_reason
    return session.state == expect


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    world = ScenarioWorld(config)
    world.run_script()
    return world.result()


# ---------------------------------------------------------------------------
# Canned configurations
# ---------------------------------------------------------------------------

def default_records() -> list[dict]:
    return [
        {"name": "ldl", "value": "3.1", "unit": "mmol/L"},
        {"name": "hba1c", "value": "5.7", "unit": "mmol/mol"},
        {"name": "blood_type", "value": "A+", "unit": ""},
    ]


def study_project(project_id: str = "study-1", bundle: str = "biomarkers") -> dict:
    criteria = {
        "biomarkers": {"reveals": ["blood_type", "ldl"], "predicates": [["ldl", ">=", 20]]},
        "metabolics": {"reveals": ["glucose"], "predicates": [["glucose", ">=", 40]]},
    }[bundle]
    return {
        "project_id": project_id,
        "title": "Biomarker sharing study",
        "org_type": "university",
        "purpose": "Understand biomarker distributions in volunteers.",
        "criteria": criteria,
        "consent_terms": "Your selected biomarkers are used for this study only, then deleted.",
        "reward": {"kind": "honorarium", "amount": 50, "currency_label": "CAD"},
        "bundle": bundle,
    }


def happy_path_config(seed: int = 1) -> ScenarioConfig:
    """1 MYco, 1 ERB, 1 researcher, 2 owners, 4 validators, 2 REWARDED sessions."""
    return ScenarioConfig(
        seed=seed,
        validators=4,
        owners=2,
        researchers=1,
        script=[
            {"action": "issue_biomarkers", "owner": "owner-0", "records": default_records()},
            {"action": "issue_biomarkers", "owner": "owner-1", "records": default_records()},
            {"action": "certify_project", "researcher": "researcher-0",
             "project": study_project()},
            {"action": "publish_project", "researcher": "researcher-0",
             "project_id": "study-1"},
            {"action": "handshake", "owner": "owner-0", "project_id": "study-1",
             "expect": "REWARDED"},
            {"action": "handshake", "owner": "owner-1", "project_id": "study-1",
             "expect": "REWARDED"},
        ],
    )


def two_researcher_config(seed: int = 2, same_credential: bool = False) -> ScenarioConfig:
    """One owner, two researchers; distinct bundles unless same_credential."""
    bundle_2 = "biomarkers" if same_credential else "metabolics"
    script = [
        {"action": "issue_biomarkers", "owner": "owner-0", "records": default_records()},
    ]
    if not same_credential:
        script.append(
            {"action": "issue_biomarkers", "owner": "owner-0", "bundle": "metabolics",
             "records": [{"name": "glucose", "value": "6.1", "unit": "mmol/L"}]}
        )
    script += [
        {"action": "certify_project", "researcher": "researcher-0",
         "project": study_project("study-1", "biomarkers")},
        {"action": "publish_project", "researcher": "researcher-0", "project_id": "study-1"},
        {"action": "certify_project", "researcher": "researcher-1",
         "project": study_project("study-2", bundle_2)},
        {"action": "publish_project", "researcher": "researcher-1", "project_id": "study-2"},
        {"action": "handshake", "owner": "owner-0", "researcher": "researcher-0",
         "project_id": "study-1", "expect": "REWARDED"},
        {"action": "handshake", "owner": "owner-0", "researcher": "researcher-1",
         "project_id": "study-2", "expect": "REWARDED"},
    ]
    return ScenarioConfig(seed=seed, owners=1, researchers=2, script=script)
