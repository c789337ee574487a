"""Command-line entry point: ``ltlmodrl <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import automaton as auto
from .config import ConfigError, load_config


class UsageError(Exception):
    pass


def _load_automaton_arg(args) -> auto.Ldgba:
    from .ltl import compile_ltl

    if getattr(args, "ltl", None):
        return compile_ltl(args.ltl)
    if getattr(args, "automaton", None):
        return auto.load_automaton(args.automaton)
    raise UsageError("give an automaton file or --ltl")


def cmd_automaton(args) -> int:
    if args.action == "compile":
        from .ltl import FragmentError, LtlSyntaxError, compile_ltl

        try:
            a = compile_ltl(args.formula)
        except (LtlSyntaxError, FragmentError) as exc:
            raise UsageError(str(exc)) from exc
        text = auto.dumps_automaton(a)
        if args.output:
            Path(args.output).write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    try:
        a = auto.from_dict(json.loads(Path(args.file).read_text()), check=False)
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {args.file}") from exc
    except (json.JSONDecodeError, auto.AutomatonError, KeyError, TypeError) as exc:
        print(f"error: {args.file}: {exc}", file=sys.stderr)
        return 1
    report = auto.validate(a)
    if args.action == "validate":
        if report.ok:
            print(f"{args.file}: ok ({len(a.states)} states, {a.f} accepting sets)")
            return 0
        print(f"{args.file}: invalid")
        for v in report.violations:
            print(f"  {v}")
        return 1
    info = {
        "states": list(a.states),
        "initial": a.initial,
        "deterministic": sorted(a.q_d),
        "nondeterministic": sorted(a.q_n),
        "accepting_sets": [sorted(s) for s in a.accepting_sets],
        "sinks": sorted(a.sinks),
        "edges": len(a.edges),
        "eps_edges": len(a.eps_edges),
        "alphabet": list(a.alphabet),
        "valid": report.ok,
        "digest": a.digest(),
    }
    print(json.dumps(info, indent=2))
    return 0


def cmd_train(args) -> int:
    from .experiment import train_run

    cfg = load_config(args.config)
    out = Path(args.output or cfg.output_dir)
    cfg.build_env()
    cfg.build_automaton()

    def progress(rec, _agent):
        if args.verbose and (rec.episode + 1) % args.verbose == 0:
            print(f"episode {rec.episode + 1}: steps={rec.steps} shaped={rec.total_shaped_reward:.4f} "
                  f"rounds={rec.rounds_completed} success={int(rec.success)}", file=sys.stderr)

    _, log = train_run(cfg, out, modular=not args.baseline, progress=progress)
    print(f"trained {len(log)} episodes -> {out}")
    return 0


def cmd_eval(args) -> int:
    from .experiment import evaluate_run

    if args.runs is not None and args.runs < 1:
        raise UsageError("--runs must be at least 1")
    if args.k is not None and args.k < 1:
        raise UsageError("--k must be at least 1")
    summary = evaluate_run(args.dir, runs=args.runs, horizon=args.horizon, k=args.k, traces=not args.no_traces)
    print(f"success_rate {summary['success_rate']:.4f} ({summary['successes']}/{summary['runs']})")
    return 0


def cmd_plot(args) -> int:
    from .plot import LogSchemaError, plot_log

    try:
        n = plot_log(args.input, args.output, window=args.window)
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {args.input}") from exc
    except LogSchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"plotted {n} episodes -> {args.output}")
    return 0


def cmd_oracle(args) -> int:
    from .oracle import build_product, load_mdp
    from .oracle.checks import (
        check_lemma1,
        check_lemma2,
        check_shaping_invariance,
        check_theorem1,
        check_theorem3,
        random_policy,
        to_jsonable,
    )
    from .shaping import RewardParams
    import numpy as np

    mdp = load_mdp(args.mdp)
    a = _load_automaton_arg(args)
    mdp.validate(a.alphabet)
    p = build_product(mdp, a)
    params = RewardParams(r_F=args.r_F, gamma_F=args.gamma_F, eta_Phi=args.eta_Phi)
    checks = ["lemma1", "lemma2", "theorem1", "theorem3", "shaping"] if args.check == "all" else [args.check]
    report: dict = {"product_states": p.n, "f": p.f, "checks": {}}
    for name in checks:
        if name == "lemma1":
            rng = np.random.default_rng(args.seed)
            results = [check_lemma1(p, random_policy(p, rng)) for _ in range(args.policies)]
            report["checks"]["lemma1"] = {
                "ok": all(r.ok for r in results), "policies": len(results),
                "failures": [to_jsonable(r) for r in results if not r.ok][:5],
            }
        elif name == "lemma2":
            report["checks"]["lemma2"] = to_jsonable(check_lemma2(p, params, runs=args.runs, seed=args.seed))
        elif name == "theorem1":
            r = check_theorem1(p)
            report["checks"]["theorem1"] = dict(to_jsonable(r), ok=r.monotone)
        elif name == "theorem3":
            report["checks"]["theorem3"] = to_jsonable(check_theorem3(p, params))
        elif name == "shaping":
            report["checks"]["shaping"] = to_jsonable(check_shaping_invariance(p, a, params))
    report["ok"] = all(c["ok"] for c in report["checks"].values())
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if report["ok"] else 1


def cmd_compare(args) -> int:
    from .experiment import compare

    cfg = load_config(args.config)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --seeds {args.seeds!r}") from exc
    if not seeds:
        raise UsageError("--seeds is empty")
    out = Path(args.output or (Path(cfg.output_dir) / "compare"))
    rows = compare(cfg, seeds, out)
    for r in rows:
        print(f"{r['task']}\t{r['method']}\t{r['seed']}\t{r['success_rate']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ltlmodrl", description="LTL-guided modular DDPG and finite-product oracle")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("automaton", help="compile, validate or inspect automata")
    asub = a.add_subparsers(dest="action", required=True)
    c = asub.add_parser("compile", help="compile an LTL formula to automaton JSON")
    c.add_argument("formula")
    c.add_argument("-o", "--output")
    for name in ("validate", "inspect"):
        v = asub.add_parser(name)
        v.add_argument("file")
    a.set_defaults(func=cmd_automaton)

    t = sub.add_parser("train", help="train an agent from a config file")
    t.add_argument("-c", "--config", required=True)
    t.add_argument("-o", "--output", help="run directory (default: config output_dir)")
    t.add_argument("--baseline", action="store_true", help="train the single-network baseline")
    t.add_argument("-v", "--verbose", type=int, default=0, metavar="N", help="progress every N episodes")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a trained run")
    e.add_argument("-d", "--dir", required=True)
    e.add_argument("--runs", type=int)
    e.add_argument("--horizon", type=int)
    e.add_argument("--k", type=int)
    e.add_argument("--no-traces", action="store_true")
    e.set_defaults(func=cmd_eval)

    pl = sub.add_parser("plot", help="plot a training log as SVG")
    pl.add_argument("-i", "--input", required=True)
    pl.add_argument("-o", "--output", required=True)
    pl.add_argument("--window", type=int, default=50)
    pl.set_defaults(func=cmd_plot)

    o = sub.add_parser("oracle", help="exact checks on a finite MDP product")
    o.add_argument("--mdp", required=True)
    o.add_argument("--automaton")
    o.add_argument("--ltl")
    o.add_argument("--check", choices=["lemma1", "lemma2", "theorem1", "theorem3", "shaping", "all"], default="all")
    o.add_argument("--r-F", dest="r_F", type=float, default=0.99)
    o.add_argument("--gamma-F", dest="gamma_F", type=float, default=0.9999)
    o.add_argument("--eta-Phi", dest="eta_Phi", type=float, default=1.0)
    o.add_argument("--policies", type=int, default=100)
    o.add_argument("--runs", type=int, default=10_000)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("-o", "--output")
    o.set_defaults(func=cmd_oracle)

    cm = sub.add_parser("compare", help="modular vs single-network DDPG over seeds")
    cm.add_argument("-c", "--config", required=True)
    cm.add_argument("--seeds", default="1,2,3")
    cm.add_argument("-o", "--output")
    cm.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any module error as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
