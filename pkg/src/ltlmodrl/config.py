"""Experiment configuration: JSON in, validated dataclasses out.

Layout::

    {
      "name": "phi_B1", "seed": 0, "output_dir": "runs/phi_B1",
      "env": {"kind": "ballpass", ...},
      "automaton": {"ltl": "GF Region1 & GF Region2"}   or   {"file": "a.json"},
      "reward": {"r_F": 0.99, "gamma_F": 0.9999, "eta_Phi": 1.0},
      "net": {"hidden": [64, 64], "actor_lr": 1e-4, "critic_lr": 1e-3, "tau": 0.005},
      "train": {"episodes": 1600, "horizon": 200, ...},
      "eval": {"runs": 200, "horizon": 1000, "k": 2, "seed": 1}
    }

Unknown keys are rejected at every level.  Relative file paths inside the
config resolve against the config file's directory.  ``LTLMODRL_SEED``
overrides ``seed``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .automaton import AutomatonError, Ldgba, load_automaton
from .ddpg import NetConfig, TrainConfig
from .envs import Env, LabelGridError, make_env
from .ltl import FragmentError, LtlSyntaxError, compile_ltl
from .shaping import RewardParams

SEED_ENV = "LTLMODRL_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class EvalConfig:
    runs: int = 200
    horizon: int = 1000
    k: int = 2
    seed: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("eval.runs must be at least 1")
        if self.horizon < 1:
            raise ValueError("eval.horizon must be at least 1")
        if self.k < 1:
            raise ValueError("eval.k must be at least 1 (k = 0 succeeds vacuously)")


ENV_KEYS = {
    "ballpass": {"kind", "width", "height", "dt", "gravity", "accel_scale", "action_bound", "v_max",
                 "regions", "start", "start_jitter"},
    "cartpole": {"kind", "gravity", "masscart", "masspole", "length", "dt", "force_max", "theta_fail",
                 "x_fail", "green", "yellow", "init_range"},
    "labelgrid": {"kind", "grid", "cell_size", "D", "alphabet", "start"},
}
TOP_KEYS = {"name", "seed", "output_dir", "env", "automaton", "reward", "net", "train", "eval"}


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    output_dir: str
    env: dict
    automaton: dict
    reward: RewardParams = field(default_factory=RewardParams)
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    base_dir: str = "."

    def to_dict(self) -> dict:
        """Resolved config, suitable for hashing and for writing next to outputs."""
        out = {
            "name": self.name, "seed": self.seed, "output_dir": self.output_dir,
            "env": self.env, "automaton": self.automaton,
            "reward": dataclasses.asdict(self.reward), "net": dataclasses.asdict(self.net),
            "train": {k: v for k, v in dataclasses.asdict(self.train).items() if k != "seed"},
            "eval": dataclasses.asdict(self.eval),
        }
        out["net"]["hidden"] = list(self.net.hidden)
        return out

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def build_env(self) -> Env:
        spec = dict(self.env)
        if spec.get("kind") == "labelgrid" and "grid" in spec:
            spec["grid"] = str(self.resolve(spec["grid"]))
        try:
            return make_env(spec)
        except (TypeError, ValueError, LabelGridError, OSError) as exc:
            raise ConfigError(f"env: {exc}") from exc

    def build_automaton(self) -> Ldgba:
        try:
            if "ltl" in self.automaton:
                return compile_ltl(self.automaton["ltl"])
            return load_automaton(self.resolve(self.automaton["file"]))
        except (LtlSyntaxError, FragmentError, AutomatonError, OSError, ValueError) as exc:
            raise ConfigError(f"automaton: {exc}") from exc


def _section(cls, data: Any, where: str, drop: tuple[str, ...] = ()):
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)} - set(drop)
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(data: Mapping, base_dir: str | Path = ".", env_override: bool = True) -> ExperimentConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    for key in ("env", "automaton"):
        if key not in data:
            raise ConfigError(f"missing section {key!r}")
    env = data["env"]
    if not isinstance(env, Mapping) or env.get("kind") not in ENV_KEYS:
        raise ConfigError(f"env.kind must be one of {sorted(ENV_KEYS)}")
    bad = set(env) - ENV_KEYS[env["kind"]]
    if bad:
        raise ConfigError(f"env: unknown keys {sorted(bad)} for kind {env['kind']!r}")
    auto = data["automaton"]
    if not isinstance(auto, Mapping) or len(auto) != 1 or not ({"ltl", "file"} & set(auto)):
        raise ConfigError("automaton: give exactly one of 'ltl' or 'file'")

    seed = data.get("seed", 0)
    if env_override and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")

    train = _section(TrainConfig, data.get("train"), "train", drop=("seed",))
    train.seed = seed
    cfg = ExperimentConfig(
        name=str(data.get("name", "experiment")),
        seed=seed,
        output_dir=str(data.get("output_dir", "runs/" + str(data.get("name", "experiment")))),
        env=dict(env),
        automaton=dict(auto),
        reward=_section(RewardParams, data.get("reward"), "reward"),
        net=_section(NetConfig, data.get("net"), "net"),
        train=train,
        eval=_section(EvalConfig, data.get("eval"), "eval"),
        base_dir=str(base_dir),
    )
    return cfg


def load_config(path: str | Path, env_override: bool = True) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(data, path.parent, env_override)
