#!/usr/bin/env python3
"""Train, evaluate and plot one config end to end.

    python scripts/run_experiment.py configs/phi_B1.json --seed 2 --baseline
"""
import argparse
import json
import sys
from pathlib import Path

from ltlmodrl.config import load_config, parse_config
from ltlmodrl.experiment import evaluate_run, train_run
from ltlmodrl.plot import plot_log


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--out", help="run directory (default: <output_dir>/seed<seed>[-baseline])")
    ap.add_argument("--baseline", action="store_true", help="single-network DDPG instead of modular")
    ap.add_argument("--every", type=int, default=100, help="progress line every N episodes")
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = parse_config(dict(cfg.to_dict(), seed=args.seed), cfg.base_dir, env_override=False)
    out = Path(args.out or Path(cfg.output_dir) / f"seed{cfg.seed}{'-baseline' if args.baseline else ''}")

    def progress(rec, _agent):
        if (rec.episode + 1) % args.every == 0:
            print(f"episode {rec.episode + 1:5d}  shaped {rec.total_shaped_reward:8.4f}  "
                  f"rounds {rec.rounds_completed}  success {int(rec.success)}", flush=True)

    train_run(cfg, out, modular=not args.baseline, progress=progress)
    summary = evaluate_run(out, traces=False)
    plot_log(out / "training_log.csv", out / "reward.svg")
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
