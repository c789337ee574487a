"""Finite labeled MDPs and their JSON form."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


class MdpError(ValueError):
    pass


@dataclass(frozen=True)
class FiniteMdp:
    n_states: int
    n_actions: int
    transitions: Mapping[tuple[int, int], tuple[tuple[int, float], ...]]
    labels: tuple[frozenset, ...]
    initial: int = 0

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(frozenset(l) for l in self.labels))
        object.__setattr__(self, "transitions", {
            (int(s), int(a)): tuple((int(t), float(p)) for t, p in dist) for (s, a), dist in self.transitions.items()
        })
        self.validate()

    def validate(self, alphabet: Iterable[str] | None = None) -> None:
        if self.n_states < 1 or self.n_actions < 1:
            raise MdpError("need at least one state and one action")
        if len(self.labels) != self.n_states:
            raise MdpError(f"{len(self.labels)} labels for {self.n_states} states")
        if not 0 <= self.initial < self.n_states:
            raise MdpError(f"initial state {self.initial} out of range")
        for (s, a), dist in self.transitions.items():
            if not (0 <= s < self.n_states and 0 <= a < self.n_actions):
                raise MdpError(f"transition ({s}, {a}) out of range")
            if any(not 0 <= t < self.n_states or p < 0 for t, p in dist):
                raise MdpError(f"bad distribution at ({s}, {a})")
            total = sum(p for _, p in dist)
            if abs(total - 1.0) > 1e-12:
                raise MdpError(f"row ({s}, {a}) sums to {total!r}")
        for s in range(self.n_states):
            if not self.actions(s):
                raise MdpError(f"state {s} has no enabled action")
        if alphabet is not None:
            extra = set().union(*self.labels) - set(alphabet)
            if extra:
                raise MdpError(f"labels use propositions outside the alphabet: {sorted(extra)}")

    def actions(self, s: int) -> list[int]:
        return [a for a in range(self.n_actions) if (s, a) in self.transitions]

    def dist(self, s: int, a: int) -> tuple[tuple[int, float], ...]:
        return self.transitions[(s, a)]

    # -- JSON
    def to_dict(self) -> dict:
        return {
            "states": self.n_states,
            "actions": self.n_actions,
            "transitions": [
                {"s": s, "a": a, "dist": [[t, p] for t, p in dist]}
                for (s, a), dist in sorted(self.transitions.items())
            ],
            "labels": [sorted(l) for l in self.labels],
            "initial": self.initial,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FiniteMdp":
        keys = {"states", "actions", "transitions", "labels", "initial"}
        unknown = set(d) - keys
        if unknown:
            raise MdpError(f"unknown keys in MDP file: {sorted(unknown)}")
        missing = keys - {"initial"} - set(d)
        if missing:
            raise MdpError(f"missing keys in MDP file: {sorted(missing)}")
        trans = {}
        for row in d["transitions"]:
            key = (int(row["s"]), int(row["a"]))
            if key in trans:
                raise MdpError(f"duplicate transition row {key}")
            trans[key] = tuple((int(t), float(p)) for t, p in row["dist"])
        return cls(int(d["states"]), int(d["actions"]), trans, tuple(frozenset(l) for l in d["labels"]),
                   int(d.get("initial", 0)))


def load_mdp(path: str | Path) -> FiniteMdp:
    try:
        return FiniteMdp.from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError) as exc:
        raise MdpError(f"{path}: malformed MDP file ({exc})") from exc


def save_mdp(mdp: FiniteMdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mdp.to_dict(), indent=2) + "\n")


class FiniteMdpEnv:
    """Adapter exposing a finite MDP through the continuous environment contract.

    The action is a vector whose first entry is rounded to an action index;
    disabled actions fall back to the lowest enabled one.
    """

    def __init__(self, mdp: FiniteMdp):
        self.mdp = mdp
        self.state_dim, self.action_dim = 1, 1
        self.action_low = np.array([0.0])
        self.action_high = np.array([float(mdp.n_actions - 1)])
        self.feature_low = np.array([0.0])
        self.feature_high = np.array([float(max(mdp.n_states - 1, 1))])
        self.propositions = tuple(sorted(set().union(*mdp.labels)))

    def reset(self, rng):
        return np.array([float(self.mdp.initial)])

    def _action(self, s: int, action) -> int:
        a = int(round(float(np.atleast_1d(action)[0])))
        enabled = self.mdp.actions(s)
        return a if a in enabled else enabled[0]

    def step(self, state, action, rng):
        s = int(state[0])
        succ, probs = zip(*self.mdp.dist(s, self._action(s, action)))
        return np.array([float(succ[int(rng.choice(len(succ), p=np.asarray(probs)))])])

    def label(self, state):
        return self.mdp.labels[int(state[0])]

    def failed(self, state):
        return False

    def sample_action(self, rng):
        return np.array([float(rng.integers(self.mdp.n_actions))])

    def normalize(self, state):
        lo, hi = self.feature_low, self.feature_high
        return 2.0 * (np.asarray(state, dtype=float) - lo) / (hi - lo) - 1.0
