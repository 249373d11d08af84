#!/usr/bin/env python3
"""Run the canned happy-path scenario, write artifacts, and run both audits.

Usage: python scripts/run_happy_path.py [seed] [artifacts_dir]
"""

from __future__ import annotations

import sys
from pathlib import Path

from omicledger.audits import phi_scan, unlinkability_audit
from omicledger.scenario import happy_path_config, run_scenario, two_researcher_config


def main() -> int:
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
    artifacts = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("artifacts/happy-path")

    result = run_scenario(happy_path_config(seed=seed))
    result.write_artifacts(artifacts)
    print(f"seed {seed}: {len(result.session_outcomes)} sessions")
    for outcome in result.session_outcomes:
        print(f"  {outcome['owner']} x {outcome['researcher']}: {outcome['state']}")
    print(f"blocks committed: {result.block_log.count(chr(10))}")
    print(f"transcript digest: {result.transcript_digest()}")

    findings = phi_scan(result.block_log, result.board_dump, result.sentinels)
    print(f"phi scan: {len(findings)} finding(s) over {len(result.sentinels)} sentinels")

    linked = run_scenario(two_researcher_config(seed=seed))
    report = unlinkability_audit(
        linked.transcript.events, ["researcher-0", "researcher-1"],
        linked.ledger_state, linked.board_dump,
    )
    print(f"unlinkability (two researchers, distinct credentials): "
          f"{'pass' if report.passed else 'FAIL'}, "
          f"intersection={len(report.intersection)} token(s), all public")
    print(f"artifacts in {artifacts}/")
    return 0 if result.ok and not findings and report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
