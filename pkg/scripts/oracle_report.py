#!/usr/bin/env python3
"""Exact checks on every finite benchmark product, printed as one table.

    python scripts/oracle_report.py [--json out.json]
"""
import argparse
import json
import sys

import numpy as np

from ltlmodrl.oracle import build_product
from ltlmodrl.oracle.checks import (
    check_lemma1,
    check_lemma2,
    check_mc_agreement,
    check_shaping_invariance,
    check_theorem1,
    check_theorem3,
    random_policy,
    to_jsonable,
)
from ltlmodrl.oracle.instances import benchmark_products
from ltlmodrl.shaping import RewardParams


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--json", help="also write the full results here")
    ap.add_argument("--policies", type=int, default=100)
    ap.add_argument("--mc-runs", type=int, default=20_000)
    args = ap.parse_args()

    params = RewardParams()
    report = {}
    print(f"{'product':18s} {'|X|':>4s} {'lemma1':>7s} {'lemma2':>7s} {'U(x0)':>8s} {'thm3':>5s} {'shaping':>8s} {'MC':>4s}")
    for name, mdp, a in benchmark_products():
        p = build_product(mdp, a)
        rng = np.random.default_rng(0)
        l1 = all(check_lemma1(p, random_policy(p, rng)).ok for _ in range(args.policies))
        l2 = check_lemma2(p, params, runs=2000)
        t1 = check_theorem1(p)
        t3 = check_theorem3(p, params)
        sh = check_shaping_invariance(p, a, params)
        mc = check_mc_agreement(p, RewardParams(0.9, 0.99), runs=args.mc_runs)
        report[name] = {"states": p.n, "lemma1": l1, "lemma2": to_jsonable(l2), "theorem1": to_jsonable(t1),
                        "theorem3": to_jsonable(t3), "shaping": to_jsonable(sh), "mc": to_jsonable(mc)}
        print(f"{name:18s} {p.n:4d} {str(l1):>7s} {str(l2.ok):>7s} {t1.rows[-1].U0:8.4f} "
              f"{str(t3.ok):>5s} {str(sh.ok):>8s} {str(mc.ok):>4s}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
