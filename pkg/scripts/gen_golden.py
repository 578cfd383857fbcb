#!/usr/bin/env python3
"""Regenerate the golden encoded-block corpus under tests/data/.

The corpus pins the byte layout: certificate serialization, the baseline block
encoding, and the deterministic workload stream. Any encoding change shows up
as a corpus diff and must be deliberate."""

import hashlib
import json
from dataclasses import replace
from pathlib import Path

from blockpipe import blockmodel, config as cfg, workload

OUT = Path(__file__).resolve().parent.parent / "tests" / "data"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    net = cfg.default_config()
    net.workload = replace(net.workload, seed=1234, accounts=512)
    gen = workload.WorkloadGenerator(net)
    manifest = {}
    for block in gen.blocks(count=2, sizes=[3, 1]):
        data = blockmodel.encode_baseline(block)
        name = f"golden_block_{block.number}.bin"
        (OUT / name).write_bytes(data)
        manifest[name] = {
            "block_num": block.number,
            "num_txs": len(block.transactions),
            "sha256": hashlib.sha256(data).hexdigest(),
            "block_digest": blockmodel.block_digest_of(block).hex(),
        }
    (OUT / "golden.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(manifest)} blocks to {OUT}")


if __name__ == "__main__":
    main()
