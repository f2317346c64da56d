"""Desk-scale comparison on walker2d: four algorithms, three seeds, M=150k, N=200k.

Usage: python scripts/walk_desk.py [out_dir]

Each finished run is written to ``out_dir/<KIND>_s<seed>/`` and skipped on
restart, so the script can be interrupted and resumed.
"""

import sys
import time
from pathlib import Path

from myoctrl.pipeline import RUNNERS, StageConfig, compare


def main(out="results/walk_desk"):
    out = Path(out)
    cfg = StageConfig(task="walk", M=150_000, N=200_000, d=8, seeds=(0, 1, 2))
    order = [(k, s) for pair in (("TSHT", "E2E"), ("SAR", "SAR_OURS"))
             for s in cfg.seeds for k in pair]
    for kind, seed in order:
        run_dir = out / f"{kind}_s{seed}"
        if (run_dir / "run.json").exists():
            continue
        t0 = time.perf_counter()
        rec = RUNNERS[kind](cfg, seed, out=run_dir)
        print(f"{kind} seed {seed}: max return {rec.max_return:.2f} "
              f"({time.perf_counter() - t0:.0f} s)", flush=True)
        dirs = sorted(p.parent for p in out.glob("*/run.json"))
        compare(dirs, out / "report.json")
    print((out / "report.txt").read_text())


if __name__ == "__main__":
    main(*sys.argv[1:])
