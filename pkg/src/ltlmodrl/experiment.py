"""Train / evaluate / compare runs on disk.

A run directory holds::

    config.json          resolved config (seed included)
    training_log.csv     one row per episode
    checkpoints/         manifest.json + one file per module
    manifest.json        hashes, version, timestamps, command status
    eval/summary.json    written by evaluate_run
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import os
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig, parse_config
from .ddpg import Agent, evaluate, train, write_log


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class RunManifest:
    def __init__(self, path: Path, cfg: ExperimentConfig, automaton_digest: str):
        self.path = path
        self.data = {
            "config_hash": cfg.digest(),
            "automaton_hash": automaton_digest,
            "code_version": __version__,
            "created": _now(),
            "commands": [],
        }
        if path.exists():
            old = json.loads(path.read_text())
            self.data["commands"] = old.get("commands", [])
            self.data["created"] = old.get("created", self.data["created"])

    def start(self, command: str) -> dict:
        entry = {"command": command, "started": _now(), "status": "running"}
        self.data["commands"].append(entry)
        write_atomic(self.path, dump_json(self.data))
        return entry

    def finish(self, entry: dict, status: str, **extra) -> None:
        entry.update(status=status, finished=_now(), **extra)
        write_atomic(self.path, dump_json(self.data))


def train_run(cfg: ExperimentConfig, out_dir: str | Path, modular: bool = True, progress=None) -> tuple[Agent, list]:
    out = Path(out_dir)
    env = cfg.build_env()
    a = cfg.build_automaton()
    out.mkdir(parents=True, exist_ok=True)
    config_dict = dict(cfg.to_dict(), modular=modular)
    if "grid" in cfg.env:
        config_dict["env"] = dict(cfg.env, grid=str(cfg.resolve(cfg.env["grid"]).resolve()))
    write_atomic(out / "config.json", dump_json(config_dict))
    if "file" in cfg.automaton:
        write_atomic(out / "automaton.json", cfg.resolve(cfg.automaton["file"]).read_text())
    manifest = RunManifest(out / "manifest.json", cfg, a.digest())
    entry = manifest.start("train")
    try:
        agent, log = train(env, a, cfg.train, cfg.net, cfg.reward, modular=modular, k=cfg.eval.k, callback=progress)
        write_log(out / "training_log.csv", log)
        agent.save(out / "checkpoints", {
            "automaton_hash": a.digest(), "config_hash": cfg.digest(), "episode": len(log),
        })
    except BaseException as exc:
        manifest.finish(entry, "failed", error=str(exc))
        raise
    manifest.finish(entry, "ok", episodes=len(log))
    return agent, log


def load_run(run_dir: str | Path) -> tuple[ExperimentConfig, Agent, object, object]:
    run = Path(run_dir)
    try:
        data = json.loads((run / "config.json").read_text())
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"{run}: no config.json (not a run directory?)") from exc
    modular = data.pop("modular", True)
    if (run / "automaton.json").exists():
        data["automaton"] = {"file": "automaton.json"}
    cfg = parse_config(data, run, env_override=False)
    env = cfg.build_env()
    a = cfg.build_automaton()
    agent = Agent(env, a, cfg.net, modular=modular, buffer_capacity=1, seed=cfg.seed)
    meta = agent.load(run / "checkpoints")
    if meta.get("automaton_hash") != a.digest():
        raise ValueError(f"{run}: checkpoint automaton hash does not match the config's automaton")
    return cfg, agent, env, a


def write_eval_trace(path: Path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        dim = len(np.atleast_1d(trace[0].s))
        w.writerow(["step", *[f"s{i}" for i in range(dim)], "q", "T"])
        for t, x in enumerate(trace):
            w.writerow([t, *[repr(float(v)) for v in np.atleast_1d(x.s)], x.q, sum(1 << j for j in x.T)])


def evaluate_run(run_dir: str | Path, runs: int | None = None, horizon: int | None = None, k: int | None = None,
                 traces: bool = True) -> dict:
    cfg, agent, env, a = load_run(run_dir)
    runs = cfg.eval.runs if runs is None else runs
    horizon = cfg.eval.horizon if horizon is None else horizon
    k = cfg.eval.k if k is None else k
    res = evaluate(agent, env, a, runs=runs, horizon=horizon, k=k, seed=cfg.eval.seed, keep_traces=traces)
    out = Path(run_dir) / "eval"
    out.mkdir(exist_ok=True)
    if traces:
        for r in res.runs:
            write_eval_trace(out / f"run_{r.run:04d}.csv", r.trace)
    summary = dict(res.summary(), horizon=horizon, k=k, modular=agent.modular)
    write_atomic(out / "summary.json", dump_json(summary))
    return summary


def compare(cfg: ExperimentConfig, seeds: Sequence[int], out_dir: str | Path, progress=None) -> list[dict]:
    """Train and evaluate modular and single-network agents per seed; write a comparison table."""
    out = Path(out_dir)
    rows = []
    for seed in seeds:
        for method, modular in (("Modular DDPG", True), ("Standard DDPG", False)):
            cell = parse_config(dict(cfg.to_dict(), seed=seed), cfg.base_dir, env_override=False)
            run_dir = out / f"seed{seed}" / ("modular" if modular else "standard")
            train_run(cell, run_dir, modular=modular, progress=progress)
            summary = evaluate_run(run_dir, traces=False)
            rows.append({"task": cfg.name, "method": method, "seed": seed, "success_rate": summary["success_rate"]})
    for method in ("Modular DDPG", "Standard DDPG") if len(seeds) > 1 else ():
        vals = [r["success_rate"] for r in rows if r["method"] == method]
        rows.append({"task": cfg.name, "method": method, "seed": "mean", "success_rate": float(np.mean(vals))})
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["task", "method", "seed", "success_rate"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return rows
