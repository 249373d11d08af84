#!/usr/bin/env python3
"""Generate genesis.jsonl and keys.json for a multi-process validator demo.

Usage: python scripts/make_cluster_files.py [n_validators] [out_dir]

Then, in four terminals (ports 9001..9004):

    omicledger ledger run --genesis out/genesis.jsonl --keys out/keys.json \
        --node validator-0 --listen 127.0.0.1:9001 \
        --peers validator-1=127.0.0.1:9002,validator-2=127.0.0.1:9003,validator-3=127.0.0.1:9004
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

from omicledger import crypto
from omicledger.bootstrap import make_genesis


def main() -> int:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 4
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("cluster")
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(0xC1A5)
    seeds = {f"validator-{i}": rng.randbytes(32) for i in range(n)}

    # rebuild the same keypairs from the recorded seeds
    boot_rng = random.Random(0xB007)
    issuer = crypto.generate_keypair(boot_rng.randbytes(32))
    genesis, node_keys = make_genesis(boot_rng, 0, {"issuer": issuer})
    genesis.validators = [
        {"id": nid, "verification_key": crypto.generate_keypair(seed).verification_key.hex()}
        for nid, seed in seeds.items()
    ]

    (out / "genesis.jsonl").write_text("\n".join(genesis.to_lines()) + "\n")
    (out / "keys.json").write_text(
        json.dumps({nid: seed.hex() for nid, seed in seeds.items()}, indent=2)
    )
    print(f"wrote {out}/genesis.jsonl and {out}/keys.json for {n} validators")
    return 0


if __name__ == "__main__":
    sys.exit(main())
