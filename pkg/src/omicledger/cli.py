"""Command-line entry point.

    omicledger run --config scenario.json [--seed N] [--artifacts DIR]
    omicledger audit phi --artifacts DIR
    omicledger audit unlink --artifacts DIR [--researchers a,b]
    omicledger serve --role owner|board --listen HOST:PORT [--config FILE]
    omicledger ledger run --genesis FILE --node ID --listen HOST:PORT --peers ID=HOST:PORT,...
    omicledger ledger verify --log FILE [--genesis FILE]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from omicledger.audits import phi_scan, state_from_block_log, unlinkability_audit
from omicledger.scenario import ScenarioConfig, Transcript, happy_path_config, run_scenario


def _parse_addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def cmd_run(args) -> int:
    if args.config:
        config = ScenarioConfig.load(args.config)
    else:
        config = happy_path_config()
    if args.seed is not None:
        config.seed = args.seed
    result = run_scenario(config)
    for outcome in result.session_outcomes:
        flag = "ok" if outcome["ok"] else "UNEXPECTED"
        reason = f" ({outcome['abort_reason']})" if outcome["abort_reason"] else ""
        print(f"session {outcome['session_id'][:8]} {outcome['owner']} x "
              f"{outcome['researcher']}: {outcome['state']}{reason} [{flag}]")
    print(f"transcript digest: {result.transcript_digest()}")
    print(f"block log digest:  {result.block_log_digest()}")
    if args.artifacts:
        result.write_artifacts(args.artifacts)
        print(f"artifacts written to {args.artifacts}")
    return 0 if result.ok else 1


def cmd_audit(args) -> int:
    artifacts = Path(args.artifacts)
    block_log = (artifacts / "blocklog.jsonl").read_text()
    board_dump = (artifacts / "board.jsonl").read_text()
    if args.which == "phi":
        sentinels = json.loads((artifacts / "sentinels.json").read_text())
        findings = phi_scan(block_log, board_dump, sentinels)
        for finding in findings:
            print(f"FINDING at {finding.location}: {finding.sentinel!r} "
                  f"(origin {finding.origin})")
        print(f"phi scan: {len(findings)} finding(s)")
        return 0 if not findings else 1

    transcript = Transcript.from_jsonl((artifacts / "transcript.jsonl").read_text())
    if args.researchers:
        researchers = args.researchers.split(",")
    else:
        researchers = sorted(
            {e.get("actor", "") for e in transcript.events
             if str(e.get("actor", "")).startswith("researcher-")}
        )
    state = state_from_block_log(block_log)
    report = unlinkability_audit(transcript.events, researchers, state, board_dump)
    print(json.dumps(report.to_dict(), indent=2))
    print(f"unlinkability: {'pass' if report.passed else 'FAIL'} "
          f"({len(report.known_limitation)} known-limitation token(s))")
    return 0 if report.passed else 1


def cmd_serve(args) -> int:
    from omicledger.service import demo_config, run_server, serve

    config = ScenarioConfig.load(args.config) if args.config else demo_config()
    host, port = _parse_addr(args.listen)
    try:
        server = serve(args.role, config, host, port, artifacts=args.artifacts)
    except OSError as exc:
        print(f"cannot listen on {args.listen}: {exc}", file=sys.stderr)
        return 1
    print(f"{args.role} service listening on http://{host}:{server.server_address[1]}",
          flush=True)
    run_server(server)
    return 0


def cmd_ledger_run(args) -> int:
    from omicledger import crypto
    from omicledger.ledger.records import GenesisConfig
    from omicledger.ledger.transport import NodeServer

    genesis = GenesisConfig.from_lines(Path(args.genesis).read_text().splitlines())
    keyfile = json.loads(Path(args.keys).read_text())
    keys = crypto.generate_keypair(bytes.fromhex(keyfile[args.node]))
    peers = {}
    for item in (args.peers or "").split(","):
        if not item:
            continue
        peer_id, _, addr = item.partition("=")
        peers[peer_id] = _parse_addr(addr)
    server = NodeServer(args.node, keys, genesis, _parse_addr(args.listen), peers)
    server.start()
    print(f"validator {args.node} listening on {server.address[0]}:{server.address[1]}")
    try:
        import time

        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_ledger_verify(args) -> int:
    from omicledger.ledger.records import (
        BlockRejected,
        GenesisConfig,
        read_block_log,
        verify_chain,
    )

    log_path = Path(args.log)
    genesis_path = Path(args.genesis) if args.genesis else log_path.parent / "genesis.jsonl"
    genesis = GenesisConfig.from_lines(genesis_path.read_text().splitlines())
    try:
        blocks = read_block_log(log_path.read_text())
    except (BlockRejected, ValueError, KeyError) as exc:
        print(f"INVALID: unreadable block log: {exc}")
        return 1
    ok, diagnostics = verify_chain(blocks, genesis)
    print(f"{'ok' if ok else 'INVALID'}: {diagnostics}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omicledger", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario")
    run.add_argument("--config", help="scenario JSON (default: built-in happy path)")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--artifacts", help="directory for transcript/block log/wallets")
    run.set_defaults(fn=cmd_run)

    audit = sub.add_parser("audit", help="privacy audits over run artifacts")
    audit.add_argument("which", choices=["phi", "unlink"])
    audit.add_argument("--artifacts", required=True)
    audit.add_argument("--researchers", help="comma-separated labels (unlink)")
    audit.set_defaults(fn=cmd_audit)

    srv = sub.add_parser("serve", help="HTTP service for the browser wallet or board")
    srv.add_argument("--role", choices=["owner", "board"], required=True)
    srv.add_argument("--config")
    srv.add_argument("--listen", default="127.0.0.1:8720")
    srv.add_argument("--artifacts", help="flush wallets here on shutdown")
    srv.set_defaults(fn=cmd_serve)

    ledger = sub.add_parser("ledger", help="validator node tools")
    ledger_sub = ledger.add_subparsers(dest="ledger_command", required=True)

    lrun = ledger_sub.add_parser("run", help="run one validator over TCP")
    lrun.add_argument("--genesis", required=True)
    lrun.add_argument("--node", required=True)
    lrun.add_argument("--listen", required=True)
    lrun.add_argument("--peers", help="id=host:port,id=host:port,...")
    lrun.add_argument("--keys", required=True, help="JSON {node_id: seed_hex}")
    lrun.set_defaults(fn=cmd_ledger_run)

    lverify = ledger_sub.add_parser("verify", help="verify a block log")
    lverify.add_argument("--log", required=True)
    lverify.add_argument("--genesis")
    lverify.set_defaults(fn=cmd_ledger_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
