"""Acceptance suite: the ten primary exit criteria.

Each test prints one pass/fail line (visible with `pytest -s` or on failure)
and asserts the criterion at its stated tolerance. Oracles are computed before
the paths they check.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
import random
import time

import pytest

from omicledger import agents, crypto
from omicledger.agents import Agent, AgentError, Envelope, MessageRouter, connect, unpack
from omicledger.audits import phi_scan, unlinkability_audit
from omicledger.bootstrap import make_genesis, self_nym
from omicledger.cli import main as cli_main
from omicledger.credentials import (
    AttributeSpec,
    CredentialHolder,
    CredentialIssuer,
    PresentationVerifier,
)
from omicledger.exchange.models import HandshakeError
from omicledger.exchange.recovery import Guardian, configure_recovery, recover_wallet
from omicledger.ledger.records import BlockRejected, read_block_log, verify_chain
from omicledger.scenario import (
    ScenarioWorld,
    happy_path_config,
    run_scenario,
    two_researcher_config,
)
from omicledger.simnet import BftNetwork


def report(number: int, description: str, ok: bool) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {description}")
    assert ok, f"criterion {number} failed: {description}"


@pytest.fixture(scope="module")
def happy_result():
    return run_scenario(happy_path_config(seed=101))


# ---------------------------------------------------------------------------
# 1. end-to-end happy path
# ---------------------------------------------------------------------------

def test_criterion_1_happy_path(tmp_path):
    config_path = tmp_path / "happy.json"
    config_path.write_text(json.dumps(happy_path_config(seed=101).to_dict()))
    artifacts = tmp_path / "artifacts"
    started = time.monotonic()
    exit_code = cli_main(["run", "--config", str(config_path), "--artifacts", str(artifacts)])
    elapsed = time.monotonic() - started
    summary = json.loads((artifacts / "summary.json").read_text())
    states = [s["state"] for s in summary["sessions"]]
    ok = exit_code == 0 and states == ["REWARDED", "REWARDED"] and elapsed < 30.0
    report(1, f"happy path: exit={exit_code}, sessions={states}, {elapsed:.1f}s < 30s", ok)


# ---------------------------------------------------------------------------
# 2. PHI exclusion
# ---------------------------------------------------------------------------

def test_criterion_2_phi_exclusion(happy_result):
    clean = phi_scan(happy_result.block_log, happy_result.board_dump, happy_result.sentinels)

    planted_config = happy_path_config(seed=102)
    planted_config.script.append(
        {"action": "plant_phi_sentinel", "value": "CONTROL-SENTINEL-5f4dcc3b5aa7"}
    )
    planted = run_scenario(planted_config)
    findings = phi_scan(planted.block_log, planted.board_dump, planted.sentinels)
    control = [f for f in findings if f.origin == "planted:control"]
    ok = clean == [] and len(findings) == 1 and len(control) == 1
    report(2, f"phi scan: happy path {len(clean)} findings, planted control {len(findings)}", ok)


# ---------------------------------------------------------------------------
# 3. identity firewall
# ---------------------------------------------------------------------------

def test_criterion_3_identity_firewall():
    distinct = run_scenario(two_researcher_config(seed=103))
    rep_distinct = unlinkability_audit(
        distinct.transcript.events, ["researcher-0", "researcher-1"],
        distinct.ledger_state, distinct.board_dump,
    )

    same = run_scenario(two_researcher_config(seed=103, same_credential=True))
    rep_same = unlinkability_audit(
        same.transcript.events, ["researcher-0", "researcher-1"],
        same.ledger_state, same.board_dump,
    )
    from omicledger.agents import WalletStore

    wallet = WalletStore.load(same.wallets["owner-0"], "owner-0-passphrase")
    handle = next(c["revocation_handle"] for c in wallet.data["credentials"]
                  if c["category"] == "biomarker")
    ok = (
        rep_distinct.passed
        and rep_distinct.known_limitation == []
        and rep_distinct.violations == []
        and rep_same.passed
        and rep_same.violations == []
        and handle in rep_same.known_limitation
    )
    report(
        3,
        "identity firewall: distinct creds intersection is public-only; "
        f"same cred flags {len(rep_same.known_limitation)} known-limitation token(s)",
        ok,
    )


# ---------------------------------------------------------------------------
# 4. predicate oracle equivalence (v_max = 16, full stack)
# ---------------------------------------------------------------------------

def test_criterion_4_predicate_grid():
    v_max = 16

    # oracle FIRST: plain iterated hashing, no calls into the system under test.
    # a holder with value v can only walk its token forward, so the predicate
    # v >= t holds iff some forward walk reaches the anchor in exactly t steps.
    def hash_forward(x: bytes, n: int) -> bytes:
        for _ in range(n):
            x = hashlib.sha256(x).digest()
        return x

    oracle: dict[tuple[int, int], bool] = {}
    oracle_rng = random.Random(104)
    for value in range(v_max + 1):
        seed = oracle_rng.randbytes(32)
        anchor = hash_forward(seed, v_max)
        token = hash_forward(seed, v_max - value)
        for threshold in range(v_max + 1):
            reachable = any(
                hash_forward(hash_forward(token, walk), threshold) == anchor
                for walk in range(v_max - threshold + 1)
            )
            oracle[(value, threshold)] = reachable
    assert all(oracle[(v, t)] == (v >= t) for v in range(v_max + 1) for t in range(v_max + 1))

    # full stack: issue one credential per value, present against each threshold
    rng = random.Random(105)
    router = MessageRouter()
    issuer_keys = crypto.generate_keypair(rng.randbytes(32))
    genesis, node_keys = make_genesis(rng, 1, {"issuer": issuer_keys})
    from omicledger.agents import did_from_verification_key
    from omicledger.simnet import DirectLedger

    ledger = DirectLedger(genesis, node_keys["validator-0"])
    did = did_from_verification_key(issuer_keys.verification_key)
    issuer_agent = Agent("issuer", random.Random(rng.randrange(2**63)), router)
    holder_agent = Agent("holder", random.Random(rng.randrange(2**63)), router)
    verifier_agent = Agent("verifier", random.Random(rng.randrange(2**63)), router)
    issuer = CredentialIssuer(issuer_agent, ledger, did, issuer_keys)
    CredentialHolder(holder_agent, lambda: ledger.state)
    verifier = PresentationVerifier(verifier_agent, lambda: ledger.state)
    issue_conn = connect(issuer_agent, holder_agent)
    present_conn = connect(verifier_agent, holder_agent)

    cred_defs = {}
    for value in range(v_max + 1):
        schema = issuer.define_schema(
            f"grid{value}", "1.0", [AttributeSpec("score", "int", precision=0, v_max=v_max)]
        )
        cred_defs[value] = issuer.publish_cred_def(schema.id)
        issuer.offer_credential(issue_conn, cred_defs[value], {"score": value})
        router.pump()

    discrepancies = []
    for value in range(v_max + 1):
        for threshold in range(v_max + 1):
            thread = verifier.request_presentation(
                present_conn,
                [{"cred_def_id": cred_defs[value], "reveal": [],
                  "predicates": [["score", ">=", threshold]]}],
                purpose_id="grid",
            )
            router.pump()
            if thread in verifier.reports:
                outcome = verifier.reports[thread].accepted
            else:
                outcome = not (verifier.refusals[thread]["reason"] == "cannot-satisfy")
            if outcome != oracle[(value, threshold)]:
                discrepancies.append((value, threshold, outcome))
    ok = discrepancies == []
    report(4, f"predicate grid 17x17 vs brute-force oracle: {len(discrepancies)} discrepancies", ok)


# ---------------------------------------------------------------------------
# 5. BFT safety and liveness
# ---------------------------------------------------------------------------

def _bft_run(seed: int) -> tuple[bool, bool]:
    rng = random.Random(seed)
    boot = crypto.generate_keypair(rng.randbytes(32))
    genesis, node_keys = make_genesis(rng, 4, {"boot": boot})
    net = BftNetwork(genesis, node_keys, rng)
    plan = random.Random(seed ^ 0xFA11)
    if plan.random() < 0.75:
        net.crash_at(plan.choice(net.order), plan.randint(0, 25))
    start_view = net.max_view()
    txs = [self_nym(crypto.generate_keypair(rng.randbytes(32)), rng, role="researcher")
           for _ in range(3)]
    live_ok = True
    try:
        for tx in txs:
            net.submit_and_wait(tx)
        digests = [tx.digest().hex() for tx in txs]
        live_ok = all(
            net.nodes[n].find_tx(d) is not None for n in net.live() for d in digests
        ) and (net.max_view() - start_view) <= 5
    except Exception:
        live_ok = False
    return net.chains_consistent(), live_ok


def test_criterion_5_bft_safety_liveness():
    safety_violations = 0
    liveness_failures = 0
    for seed in range(200):
        safe, live = _bft_run(20_000 + seed)
        safety_violations += 0 if safe else 1
        liveness_failures += 0 if live else 1

    # crashed leader: commits after exactly one view change
    rng = random.Random(106)
    boot = crypto.generate_keypair(rng.randbytes(32))
    genesis, node_keys = make_genesis(rng, 4, {"boot": boot})
    net = BftNetwork(genesis, node_keys, rng)
    net.crash_at("validator-0", 0)  # leader of view 0
    net.submit_and_wait(self_nym(crypto.generate_keypair(rng.randbytes(32)), rng))
    leader_case = {net.nodes[n].view for n in net.live()} == {1}

    ok = safety_violations == 0 and liveness_failures == 0 and leader_case
    report(
        5,
        f"200 seeded schedules: {safety_violations} safety violations, "
        f"{liveness_failures} liveness failures; crashed leader commits in view 1",
        ok,
    )


# ---------------------------------------------------------------------------
# 6. tamper suite
# ---------------------------------------------------------------------------

def _leaf_paths(obj, prefix=()):
    if isinstance(obj, dict):
        for key, value in obj.items():
            yield from _leaf_paths(value, prefix + (key,))
    elif isinstance(obj, list):
        for index, value in enumerate(obj):
            yield from _leaf_paths(value, prefix + (index,))
    else:
        yield prefix, obj


def _mutate(obj, path, rng):
    mutant = copy.deepcopy(obj)
    target = mutant
    for key in path[:-1]:
        target = target[key]
    value = target[path[-1]]
    if isinstance(value, bool):
        target[path[-1]] = not value
    elif isinstance(value, int):
        target[path[-1]] = value + 1 + rng.randrange(4)
    elif isinstance(value, str) and value and all(c in "0123456789abcdef" for c in value):
        target[path[-1]] = "".join(rng.choice("0123456789abcdef") for _ in value)
    elif isinstance(value, str):
        target[path[-1]] = value + "x" if value else "x"
    else:
        target[path[-1]] = "mutated"
    return mutant


def test_criterion_6_tamper_suite():
    rng = random.Random(107)

    # -- accepted presentation fixture --------------------------------------
    from omicledger.agents import did_from_verification_key
    from omicledger.credentials import verify_presentation
    from omicledger.simnet import DirectLedger

    router = MessageRouter()
    issuer_keys = crypto.generate_keypair(rng.randbytes(32))
    genesis, node_keys = make_genesis(rng, 1, {"issuer": issuer_keys})
    ledger = DirectLedger(genesis, node_keys["validator-0"])
    did = did_from_verification_key(issuer_keys.verification_key)
    issuer_agent = Agent("issuer", random.Random(1), router)
    holder_agent = Agent("holder", random.Random(2), router)
    verifier_agent = Agent("verifier", random.Random(3), router)
    issuer = CredentialIssuer(issuer_agent, ledger, did, issuer_keys)
    CredentialHolder(holder_agent, lambda: ledger.state)
    verifier = PresentationVerifier(verifier_agent, lambda: ledger.state)
    schema = issuer.define_schema(
        "markers", "1.0",
        [AttributeSpec("ldl", "int", precision=1, v_max=100),
         AttributeSpec("blood_type", "string")],
    )
    cred_def_id = issuer.publish_cred_def(schema.id)
    issuer.offer_credential(connect(issuer_agent, holder_agent), cred_def_id,
                            {"ldl": "3.1", "blood_type": "A+"})
    router.pump()
    thread = verifier.request_presentation(
        connect(verifier_agent, holder_agent),
        [{"cred_def_id": cred_def_id, "reveal": ["blood_type"],
          "predicates": [["ldl", ">=", 20]]}],
        purpose_id="tamper",
    )
    router.pump()
    presentation = verifier.presentations[thread]
    request = verifier.pending[thread]
    assert verify_presentation(presentation, request, ledger.state).accepted

    accepted_mutants = []
    paths = list(_leaf_paths(presentation))
    for i in range(100):
        path, _ = paths[i % len(paths)]
        mutant = _mutate(presentation, path, rng)
        if mutant == presentation:
            continue
        if verify_presentation(mutant, request, ledger.state).accepted:
            accepted_mutants.append(("presentation", path))

    # -- accepted block fixture ----------------------------------------------
    net_rng = random.Random(108)
    boot = crypto.generate_keypair(net_rng.randbytes(32))
    net_genesis, net_keys = make_genesis(net_rng, 4, {"boot": boot})
    net = BftNetwork(net_genesis, net_keys, net_rng)
    for _ in range(2):
        net.submit_and_wait(self_nym(crypto.generate_keypair(net_rng.randbytes(32)), net_rng))
    chain_dicts = [b.to_dict() for b in net.reference_node().chain]
    assert len(chain_dicts) >= 3

    def chain_ok(dicts) -> bool:
        try:
            blocks = [read_block_log(json.dumps(d))[0] for d in dicts]
            ok, _ = verify_chain(blocks, net_genesis)
            return ok
        except (BlockRejected, ValueError, KeyError, TypeError):
            return False

    assert chain_ok(chain_dicts)
    block_paths = [
        (bi, path)
        for bi in range(1, len(chain_dicts))  # genesis is configuration, not an accepted block
        for path, _ in _leaf_paths(chain_dicts[bi])
    ]
    for i in range(100):
        bi, path = block_paths[i % len(block_paths)]
        mutated = list(chain_dicts)
        mutated[bi] = _mutate(chain_dicts[bi], path, rng)
        if mutated[bi] == chain_dicts[bi]:
            continue
        if chain_ok(mutated):
            accepted_mutants.append(("block", (bi, path)))

    # -- accepted envelope fixture ---------------------------------------------
    sender = crypto.generate_keypair(rng.randbytes(32))
    recipient = crypto.generate_keypair(rng.randbytes(32))
    registry = {recipient.verification_key.hex(): recipient}
    payload = json.dumps({"protocol": "ping", "type": "ping", "thread_id": "t",
                          "id": "m", "body": {}}).encode()
    envelope = agents.pack(sender, recipient.verification_key, payload,
                           agents.AUTHCRYPT, rng).to_wire()

    def envelope_ok(wire: dict) -> bool:
        try:
            env = Envelope.from_wire(wire)
            keys = registry.get(env.to)
            if keys is None:
                return False
            sender_vk, plain = unpack(keys, env)
            return sender_vk == sender.verification_key and plain == payload
        except (AgentError, crypto.CryptoError, ValueError):
            return False

    assert envelope_ok(envelope)
    env_paths = list(_leaf_paths(envelope))
    for i in range(100):
        path, _ = env_paths[i % len(env_paths)]
        mutant = _mutate(envelope, path, rng)
        if mutant == envelope:
            continue
        if envelope_ok(mutant):
            accepted_mutants.append(("envelope", path))

    ok = accepted_mutants == []
    report(6, f"tamper suite (100 mutations x 3 object classes): "
              f"{len(accepted_mutants)} accepted mutants", ok)


# ---------------------------------------------------------------------------
# 7. ordering
# ---------------------------------------------------------------------------

def test_criterion_7_ordering(happy_result):
    events = happy_result.transcript.events
    sessions = {
        e["meta"]["session"] if "meta" in e else e.get("session")
        for e in events
        if e["kind"] == "terms_presented"
    }
    order_kinds = ["terms_presented", "eligibility_request", "consent_record",
                   "data_package", "reward_issued"]
    ordered = True
    checked = 0
    for event_session in sessions:
        indexes = []
        for kind in order_kinds:
            seqs = [e["seq"] for e in events
                    if e["kind"] == kind and e.get("session") == event_session]
            if not seqs:
                ordered = False
                break
            indexes.append(min(seqs))
        else:
            checked += 1
            ordered = ordered and indexes == sorted(indexes) and len(set(indexes)) == len(indexes)

    # reward-before-transfer hook: refused, state unchanged
    world = ScenarioWorld(happy_path_config(seed=109))
    world.run_script()
    owner = world.owners["owner-0"]
    researcher = world.researchers["researcher-0"]
    session = owner.start_handshake(world.board, world.adverts["study-1"])
    sid = session.session_id
    owner.verify_ethics(sid)
    owner.approve_eligibility(sid)
    owner.give_consent(sid, ["blood_type"])
    state_before = (session.state, researcher.sessions[sid].state)
    refused = False
    try:
        researcher.send_reward(sid)
    except HandshakeError:
        refused = True
    unchanged = (session.state, researcher.sessions[sid].state) == state_before
    from omicledger.exchange.models import session_hash

    no_reward = not any(
        a["value"] == session_hash(sid)
        for reward in owner.rewards()
        for a in reward["attrs"]
        if a["name"] == "session_hash"
    )

    ok = ordered and checked == 2 and refused and unchanged and no_reward
    report(7, f"ordering holds in {checked} sessions; premature reward refused "
              f"with state unchanged", ok)


# ---------------------------------------------------------------------------
# 8. revocation
# ---------------------------------------------------------------------------

def test_criterion_8_revocation():
    config = happy_path_config(seed=110)
    config.script += [
        {"action": "revoke_ethics", "project_id": "study-1"},
        {"action": "handshake", "owner": "owner-0", "project_id": "study-1",
         "expect": "ABORTED:revocation"},
    ]
    result = run_scenario(config)
    states = [(o["state"], o["abort_reason"]) for o in result.session_outcomes]
    pre_ok = states[0] == ("REWARDED", "") and states[1] == ("REWARDED", "")
    post_ok = states[2][0] == "ABORTED" and "revocation" in states[2][1]

    # monotone: revoked at its entry height and every height after
    state = result.ledger_state
    registry_id, handle, first = next(
        (rid, h, height)
        for rid, entries in state.revocation_sets.items()
        for h, height in entries.items()
    )
    monotone = all(
        state.query_revoked(registry_id, handle, at_height=h) is (h >= first)
        for h in range(state.height + 1)
    )
    ok = result.ok and pre_ok and post_ok and monotone
    report(8, f"revocation: prior sessions {states[0][0]}/{states[1][0]}, "
              f"new session {states[2][0]} ({states[2][1]}), monotone={monotone}", ok)


# ---------------------------------------------------------------------------
# 9. recovery
# ---------------------------------------------------------------------------

def test_criterion_9_recovery():
    world = ScenarioWorld(happy_path_config(seed=111))
    world.run_script()
    owner = world.owners["owner-0"]
    guardians = [Guardian(world.ctx.agent(f"guardian-{i}")) for i in range(3)]
    configure_recovery(owner, guardians, k=2)
    sealed = owner.agent.wallet.save(owner.passphrase, world.rng)
    original = owner.agent.wallet.serialize()

    subsets_ok = all(
        recover_wallet([g.share_for("owner-0") for g in pair], sealed).serialize() == original
        for pair in itertools.combinations(guardians, 2)
    )
    single_fails = False
    try:
        recover_wallet([guardians[0].share_for("owner-0")], sealed)
    except crypto.CryptoError:
        single_fails = True

    ok = subsets_ok and single_fails
    report(9, f"2-of-3 recovery: all 3 subsets byte-identical={subsets_ok}, "
              f"single share fails={single_fails}", ok)


# ---------------------------------------------------------------------------
# 10. determinism
# ---------------------------------------------------------------------------

def test_criterion_10_determinism():
    config = happy_path_config(seed=112)
    config.faults = [{"action": "crash", "node": "validator-2", "tick": 9}]
    a = run_scenario(config)
    b = run_scenario(config)
    ok = (
        a.transcript_digest() == b.transcript_digest()
        and a.block_log_digest() == b.block_log_digest()
    )
    report(10, f"determinism: transcript {a.transcript_digest()[:12]}… and block log "
               f"{a.block_log_digest()[:12]}… reproduce exactly", ok)
