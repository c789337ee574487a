#!/usr/bin/env python3
"""Modular vs single-network DDPG success rates over seeds, one table per task.

    python scripts/learning_table.py configs/phi_B1.json configs/phi_C2.json --seeds 1,2,3

Each cell trains with the config's full budget, so expect minutes per cell.
"""
import argparse
import csv
import sys
from pathlib import Path

from ltlmodrl.config import load_config
from ltlmodrl.experiment import compare


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--seeds", default="1,2,3")
    ap.add_argument("--out", default="runs/learning_table")
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]

    rows = []
    for path in args.configs:
        cfg = load_config(path)
        rows += compare(cfg, seeds, Path(args.out) / cfg.name)
    out = Path(args.out) / "table.csv"
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["task", "method", "seed", "success_rate"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"{r['task']:10s} {r['method']:15s} {str(r['seed']):>5s} {r['success_rate']:.3f}")
    print(f"-> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
