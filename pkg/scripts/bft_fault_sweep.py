#!/usr/bin/env python3
"""Sweep seeded schedules over the 4-validator network with random crash
faults; report safety/liveness statistics and the view-change histogram.

Usage: python scripts/bft_fault_sweep.py [n_schedules]
"""

from __future__ import annotations

import random
import sys
from collections import Counter

from omicledger import crypto
from omicledger.bootstrap import make_genesis, self_nym
from omicledger.simnet import BftNetwork, LedgerUnavailable


def run_one(seed: int) -> tuple[bool, bool, int, str]:
    rng = random.Random(seed)
    boot = crypto.generate_keypair(rng.randbytes(32))
    genesis, node_keys = make_genesis(rng, 4, {"boot": boot})
    net = BftNetwork(genesis, node_keys, rng)
    plan = random.Random(seed ^ 0xFA11)
    fault = "none"
    if plan.random() < 0.75:
        victim = plan.choice(net.order)
        tick = plan.randint(0, 25)
        net.crash_at(victim, tick)
        fault = f"{victim}@{tick}"
    txs = [self_nym(crypto.generate_keypair(rng.randbytes(32)), rng) for _ in range(3)]
    live = True
    try:
        for tx in txs:
            net.submit_and_wait(tx)
    except LedgerUnavailable:
        live = False
    return net.chains_consistent(), live, net.max_view(), fault


def main() -> int:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    views = Counter()
    safety_violations = liveness_failures = 0
    for seed in range(n):
        safe, live, max_view, fault = run_one(30_000 + seed)
        views[max_view] += 1
        if not safe:
            safety_violations += 1
            print(f"SAFETY VIOLATION at seed {seed} (fault {fault})")
        if not live:
            liveness_failures += 1
            print(f"liveness failure at seed {seed} (fault {fault})")
    print(f"{n} schedules: {safety_violations} safety violations, "
          f"{liveness_failures} liveness failures")
    print("final-view histogram:",
          ", ".join(f"view {v}: {c}" for v, c in sorted(views.items())))
    return 0 if safety_violations == 0 and liveness_failures == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
