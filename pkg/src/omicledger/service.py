"""HTTP services: the data-owner agent API (consumed by the browser wallet)
and the bulletin board.

A serve-mode process hosts a full demo world in-process (validators, MYco,
ERB, researcher, board) and exposes the owner's agent over HTTP. All
cryptography stays inside the agent; the browser client only ever sees JSON
views. One lock serializes world access, preserving per-agent serial dispatch.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from omicledger.agents import AgentError
from omicledger.exchange.models import HandshakeError
from omicledger.exchange.recovery import Guardian, configure_recovery, recover_wallet
from omicledger.scenario import ScenarioConfig, ScenarioWorld, default_records, study_project


def demo_config(seed: int = 1) -> ScenarioConfig:
    """World setup for serve mode: issuance + one published study, no handshakes."""
    return ScenarioConfig(
        seed=seed,
        validators=4,
        owners=1,
        researchers=1,
        script=[
            {"action": "issue_biomarkers", "owner": "owner-0", "records": default_records()},
            {"action": "certify_project", "researcher": "researcher-0",
             "project": study_project()},
            {"action": "publish_project", "researcher": "researcher-0",
             "project_id": "study-1"},
        ],
    )


class OwnerServiceState:
    """The served world plus the helpers the HTTP layer needs."""

    def __init__(self, config: ScenarioConfig, owner_label: str = "owner-0") -> None:
        self.world = ScenarioWorld(config)
        self.world.run_script()
        self.owner = self.world.owners[owner_label]
        self.lock = threading.Lock()
        self.guardians: list[Guardian] = []

    def researcher_for_project(self, project_id: str):
        for researcher in self.world.researchers.values():
            if project_id in researcher.projects:
                return researcher
        raise HandshakeError(f"no researcher serves project {project_id}")

    # -- owner-facing operations (each called under the lock) -----------------

    def list_projects(self, org_type: str | None) -> list[dict]:
        return self.world.board.discover(org_type)

    def list_credentials(self) -> list[dict]:
        out = []
        for cred in self.owner.credentials():
            if cred["category"] == "reward":
                continue
            revoked = self._revoked(cred)
            out.append(_credential_view(cred, revoked))
        return out

    def list_rewards(self) -> list[dict]:
        return [_credential_view(c, self._revoked(c)) for c in self.owner.rewards()]

    def _revoked(self, cred: dict) -> bool:
        state = self.world.net.state
        cred_def = state.query_cred_def(cred["cred_def_id"])
        if not cred_def:
            return False
        try:
            return state.query_revoked(cred_def["revoc_reg_id"], cred["revocation_handle"])
        except KeyError:
            return False

    def start_session(self, advert_id: str) -> dict:
        session = self.owner.start_handshake(self.world.board, advert_id)
        if session.state == "TERMS_PRESENTED":
            self.owner.verify_ethics(session.session_id)
        return session.to_dict()

    def eligibility_approve(self, session_id: str) -> dict:
        session = self.owner.sessions[session_id]
        self.owner.approve_eligibility(session_id)
        return session.to_dict()

    def consent(self, session_id: str, selected: list[str]) -> dict:
        session = self.owner.sessions[session_id]
        self.owner.give_consent(session_id, selected)
        if session.state == "CONSENTED":
            self.owner.transfer_data(session_id)
        if session.state == "DATA_TRANSFERRED":
            project_id = session.advert["project_id"]
            self.researcher_for_project(project_id).send_reward(session_id)
        return session.to_dict()

    def abort(self, session_id: str, reason: str) -> dict:
        return self.owner.abort(session_id, reason or "user-abort").to_dict()

    def recovery_config(self, guardian_count: int, k: int) -> dict:
        self.guardians = [
            Guardian(self.world.ctx.agent(f"{self.owner.label}-guardian-{i}"))
            for i in range(guardian_count)
        ]
        return configure_recovery(self.owner, self.guardians, k)

    def recovery_restore(self, guardian_indices: list[int]) -> dict:
        if not self.guardians:
            raise AgentError("recovery is not configured")
        sealed = self.owner.agent.wallet.save(self.owner.passphrase, self.world.rng)
        shares = [self.guardians[i].share_for(self.owner.label) for i in guardian_indices]
        restored = recover_wallet(shares, sealed)
        intact = restored.serialize() == self.owner.agent.wallet.serialize()
        return {"restored": True, "byte_identical": intact,
                "credentials": len(restored.data["credentials"])}

    def flush_wallets(self, directory: str) -> None:
        from pathlib import Path

        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        blob = self.owner.agent.wallet.save(self.owner.passphrase, self.world.rng)
        (out / f"{self.owner.label}.wallet").write_bytes(blob)


def _credential_view(cred: dict, revoked: bool) -> dict:
    """What the UI sees: names and values, never salts or tokens."""
    return {
        "cred_def_id": cred["cred_def_id"],
        "schema_id": cred["schema_id"],
        "category": cred["category"],
        "attributes": [{"name": a["name"], "value": a["value"]} for a in cred["attrs"]],
        "revoked": revoked,
    }


class _ApiError(Exception):
    def __init__(self, status: int, message: str) -> None:
        super().__init__(message)
        self.status = status


def _json_response(handler: BaseHTTPRequestHandler, status: int, body: object) -> None:
    raw = json.dumps(body).encode("utf-8")
    handler.send_response(status)
    handler.send_header("Content-Type", "application/json")
    handler.send_header("Content-Length", str(len(raw)))
    handler.send_header("Access-Control-Allow-Origin", "*")
    handler.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
    handler.send_header("Access-Control-Allow-Headers", "Content-Type")
    handler.end_headers()
    handler.wfile.write(raw)


def make_owner_handler(state: OwnerServiceState):
    """Route table for the data-owner agent service (plus board reads)."""

    routes = [
        ("GET", r"^/health$", lambda m, q, b: {"ok": True, "owner": state.owner.label}),
        ("GET", r"^/projects$", lambda m, q, b: state.list_projects(q.get("org_type"))),
        ("GET", r"^/adverts$", lambda m, q, b: state.list_projects(q.get("org_type"))),
        ("GET", r"^/credentials$", lambda m, q, b: state.list_credentials()),
        ("GET", r"^/rewards$", lambda m, q, b: state.list_rewards()),
        ("GET", r"^/sessions$", lambda m, q, b: [
            s.to_dict() for s in state.owner.sessions.values()
        ]),
        ("GET", r"^/sessions/(?P<sid>[0-9a-f]+)$", lambda m, q, b: _session(state, m["sid"])),
        ("POST", r"^/sessions$", lambda m, q, b: state.start_session(_require(b, "advert_id"))),
        ("POST", r"^/sessions/(?P<sid>[0-9a-f]+)/eligibility-approve$",
         lambda m, q, b: state.eligibility_approve(_known(state, m["sid"]))),
        ("POST", r"^/sessions/(?P<sid>[0-9a-f]+)/consent$",
         lambda m, q, b: _consent(state, m["sid"], b)),
        ("POST", r"^/sessions/(?P<sid>[0-9a-f]+)/abort$",
         lambda m, q, b: state.abort(_known(state, m["sid"]), (b or {}).get("reason", ""))),
        ("POST", r"^/recovery/config$",
         lambda m, q, b: state.recovery_config(int(_require(b, "guardians")),
                                               int(_require(b, "k")))),
        ("POST", r"^/recovery/restore$",
         lambda m, q, b: state.recovery_restore(list(_require(b, "guardian_indices")))),
    ]

    def _session(state: OwnerServiceState, sid: str) -> dict:
        return state.owner.sessions[_known(state, sid)].to_dict()

    def _known(state: OwnerServiceState, sid: str) -> str:
        if sid not in state.owner.sessions:
            raise _ApiError(404, f"unknown session {sid}")
        return sid

    def _require(body: dict | None, key: str):
        if not body or key not in body:
            raise _ApiError(422, f"missing field {key!r}")
        return body[key]

    def _consent(state: OwnerServiceState, sid: str, body: dict | None) -> dict:
        _known(state, sid)
        selected = (body or {}).get("selected_attrs")
        if selected is None or not isinstance(selected, list):
            raise _ApiError(422, "selected_attrs must be a list")
        try:
            return state.consent(sid, selected)
        except HandshakeError as exc:
            raise _ApiError(422, str(exc)) from exc

    class OwnerHandler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # tests don't want stderr chatter
            pass

        def do_OPTIONS(self):
            _json_response(self, 204, {})

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def _dispatch(self, method: str) -> None:
            parsed = urlparse(self.path)
            query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
            body = None
            length = int(self.headers.get("Content-Length") or 0)
            if length:
                try:
                    body = json.loads(self.rfile.read(length))
                except ValueError:
                    _json_response(self, 400, {"error": "invalid JSON body"})
                    return
            for verb, pattern, fn in routes:
                if verb != method:
                    continue
                match = re.match(pattern, parsed.path)
                if not match:
                    continue
                try:
                    with state.lock:
                        result = fn(match.groupdict(), query, body)
                    _json_response(self, 200, result)
                except _ApiError as exc:
                    _json_response(self, exc.status, {"error": str(exc)})
                except HandshakeError as exc:
                    _json_response(self, 409, {"error": str(exc)})
                except (AgentError, KeyError, ValueError) as exc:
                    _json_response(self, 422, {"error": str(exc)})
                return
            _json_response(self, 404, {"error": f"no route {method} {parsed.path}"})

    return OwnerHandler


def make_board_handler(state: OwnerServiceState):
    """Standalone board role: advert reads plus certificate-gated publication."""

    class BoardHandler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            pass

        def do_OPTIONS(self):
            _json_response(self, 204, {})

        def do_GET(self):
            parsed = urlparse(self.path)
            query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
            if parsed.path == "/adverts":
                with state.lock:
                    _json_response(self, 200, state.world.board.discover(query.get("org_type")))
                return
            _json_response(self, 404, {"error": "no such route"})

        def do_POST(self):
            parsed = urlparse(self.path)
            if parsed.path != "/adverts":
                _json_response(self, 404, {"error": "no such route"})
                return
            length = int(self.headers.get("Content-Length") or 0)
            try:
                body = json.loads(self.rfile.read(length))
                advert = body["advert"]
                presentation = body["presentation"]
                request = body["request"]
            except (ValueError, KeyError):
                _json_response(self, 422, {"error": "advert, presentation, request required"})
                return
            from omicledger.exchange.board import BoardError

            try:
                with state.lock:
                    advert_id = state.world.board.publish(
                        advert, presentation, request, invitation_factory=lambda: {}
                    )
                _json_response(self, 200, {"advert_id": advert_id})
            except BoardError as exc:
                _json_response(self, 422, {"error": str(exc)})

    return BoardHandler


def serve(role: str, config: ScenarioConfig, host: str, port: int,
          artifacts: str | None = None) -> ThreadingHTTPServer:
    """Start a service; returns the server (caller owns serve_forever/shutdown)."""
    state = OwnerServiceState(config)
    handler = make_owner_handler(state) if role == "owner" else make_board_handler(state)
    server = ThreadingHTTPServer((host, port), handler)
    server.service_state = state
    server.artifacts_dir = artifacts
    return server


def run_server(server: ThreadingHTTPServer) -> None:
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        if server.artifacts_dir:
            server.service_state.flush_wallets(server.artifacts_dir)
        server.server_close()
