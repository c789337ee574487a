"""Continuous labeled MDPs: Ball-Pass, CartPole and a label-grid rover.

Environments are functional: ``step(state, action, rng)`` returns a fresh
state array and never mutates its input, so one instance can serve many
rollouts as long as each rollout owns its random generator.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class Env:
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    feature_low: np.ndarray
    feature_high: np.ndarray
    propositions: tuple[str, ...] = ()

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def step(self, state, action, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def label(self, state) -> frozenset:
        raise NotImplementedError

    def failed(self, state) -> bool:
        return False

    def clip_action(self, action) -> np.ndarray:
        return np.clip(np.asarray(action, dtype=float).reshape(self.action_dim), self.action_low, self.action_high)

    def sample_action(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.action_low, self.action_high)

    def normalize(self, state) -> np.ndarray:
        lo, hi = self.feature_low, self.feature_high
        return 2.0 * (np.asarray(state, dtype=float) - lo) / (hi - lo) - 1.0


# ------------------------------------------------------------------ Ball-Pass

@dataclass(frozen=True)
class Region:
    name: str
    center: tuple[float, float]
    size: tuple[float, float]

    def contains(self, x: float, y: float) -> bool:
        return abs(x - self.center[0]) <= self.size[0] / 2 and abs(y - self.center[1]) <= self.size[1] / 2


DEFAULT_REGIONS = (
    Region("Region1", (150.0, 300.0), (80.0, 80.0)),
    Region("Region2", (450.0, 300.0), (80.0, 80.0)),
)


@dataclass
class BallPass(Env):
    """Point mass ``x'' = a_x``, ``y'' = a_y - g`` in a walled box.

    Semi-implicit Euler: velocity first, then position.  A wall or the floor
    stops the ball: the position is clamped and that velocity component is
    zeroed.  State is ``(x, y, vx, vy)``.
    """

    width: float = 600.0
    height: float = 600.0
    dt: float = 0.05
    gravity: float = 9.8
    accel_scale: float = 1.0
    action_bound: tuple[float, float] = (0.0, 1.0)
    v_max: float = 50.0
    regions: tuple[Region, ...] = DEFAULT_REGIONS
    start: tuple[float, float] | None = None  # None: uniform over the floor
    start_jitter: float = 0.0

    def __post_init__(self):
        self.state_dim, self.action_dim = 4, 2
        self.action_low = np.full(2, self.action_bound[0], dtype=float)
        self.action_high = np.full(2, self.action_bound[1], dtype=float)
        self.feature_low = np.array([0.0, 0.0, -self.v_max, -self.v_max])
        self.feature_high = np.array([self.width, self.height, self.v_max, self.v_max])
        self.propositions = tuple(r.name for r in self.regions)
        self._g = np.array([0.0, -self.gravity])

    def reset(self, rng):
        if self.start is None:
            x, y = rng.uniform(0.0, self.width), 0.0
        else:
            x, y = self.start
            if self.start_jitter:
                x, y = np.array([x, y]) + rng.uniform(-self.start_jitter, self.start_jitter, size=2)
        return np.array([np.clip(x, 0, self.width), np.clip(y, 0, self.height), 0.0, 0.0])

    def step(self, state, action, rng=None):
        a = self.clip_action(action) * self.accel_scale
        pos = np.asarray(state[:2], dtype=float)
        vel = np.asarray(state[2:], dtype=float) + (a + self._g) * self.dt
        np.clip(vel, -self.v_max, self.v_max, out=vel)
        pos = pos + vel * self.dt
        upper = (self.width, self.height)
        for i in range(2):
            if pos[i] <= 0.0:
                pos[i] = 0.0
                vel[i] = max(vel[i], 0.0)
            elif pos[i] >= upper[i]:
                pos[i] = upper[i]
                vel[i] = min(vel[i], 0.0)
        return np.concatenate([pos, vel])

    def label(self, state):
        x, y = float(state[0]), float(state[1])
        return frozenset(r.name for r in self.regions if r.contains(x, y))


def ballpass_step(env: BallPass, state, action, rng=None):
    return env.step(state, action, rng)


# ------------------------------------------------------------------- CartPole

@dataclass
class CartPole(Env):
    """Classic cart-pole (Barto et al. 1983 equations) with explicit Euler.

    State is ``(x, x_dot, theta, theta_dot)``; the action is the horizontal
    force on the cart.
    """

    gravity: float = 9.8
    masscart: float = 1.0
    masspole: float = 0.1
    length: float = 0.5  # half the pole length
    dt: float = 0.02
    force_max: float = 10.0
    theta_fail: float = 0.2095
    x_fail: float = 2.4
    green: tuple[float, float] = (-1.44, -0.96)
    yellow: tuple[float, float] = (0.96, 1.44)
    init_range: float = 0.05

    def __post_init__(self):
        self.state_dim, self.action_dim = 4, 1
        self.action_low = np.array([-self.force_max])
        self.action_high = np.array([self.force_max])
        # beyond these the episode has failed; clamping keeps numbers finite
        self.feature_low = np.array([-2 * self.x_fail, -10.0, -math.pi, -10.0])
        self.feature_high = -self.feature_low
        self.propositions = ("Green", "Yellow", "Unsafe")

    def reset(self, rng):
        return rng.uniform(-self.init_range, self.init_range, size=4)

    def step(self, state, action, rng=None):
        force = float(self.clip_action(action)[0])
        x, x_dot, theta, theta_dot = (float(v) for v in state)
        total_mass = self.masscart + self.masspole
        pml = self.masspole * self.length
        cos, sin = math.cos(theta), math.sin(theta)
        temp = (force + pml * theta_dot**2 * sin) / total_mass
        theta_acc = (self.gravity * sin - cos * temp) / (self.length * (4.0 / 3.0 - self.masspole * cos**2 / total_mass))
        x_acc = temp - pml * theta_acc * cos / total_mass
        nxt = np.array([
            x + self.dt * x_dot,
            x_dot + self.dt * x_acc,
            theta + self.dt * theta_dot,
            theta_dot + self.dt * theta_acc,
        ])
        return np.clip(nxt, self.feature_low, self.feature_high)

    def failed(self, state):
        return abs(float(state[2])) > self.theta_fail or abs(float(state[0])) > self.x_fail

    def label(self, state):
        x = float(state[0])
        out = set()
        if self.green[0] <= x <= self.green[1]:
            out.add("Green")
        if self.yellow[0] <= x <= self.yellow[1]:
            out.add("Yellow")
        if self.failed(state):
            out.add("Unsafe")
        return frozenset(out)


def cartpole_step(env: CartPole, state, force, rng=None):
    return env.step(state, force, rng)


def cartpole_label(env: CartPole, state):
    return env.label(state)


# ------------------------------------------------------------------ LabelGrid

class LabelGridError(ValueError):
    pass


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


@dataclass
class LabelGrid(Env):
    """Rover on a rectangular map whose cells carry proposition sets.

    Row ``r`` of ``cells`` covers ``y`` in ``[r*h, (r+1)*h)``; column ``c``
    covers ``x`` in ``[c*w, (c+1)*w)``.  An action is a heading in radians; the
    rover moves a random distance drawn from ``(0, D]`` along it.
    """

    cells: Sequence[Sequence[frozenset]] = ((frozenset(),),)
    width: float = 1.0
    height: float = 1.0
    D: float = 1.0
    start: tuple[float, float] | None = None

    def __post_init__(self):
        self.cells = tuple(tuple(row) for row in self.cells)
        self.rows, self.cols = len(self.cells), len(self.cells[0])
        self.cell_w, self.cell_h = self.width / self.cols, self.height / self.rows
        self.state_dim, self.action_dim = 2, 1
        self.action_low, self.action_high = np.array([0.0]), np.array([2 * math.pi])
        self.feature_low = np.array([0.0, 0.0])
        self.feature_high = np.array([self.width, self.height])
        props: list[str] = []
        for row in self.cells:
            for cell in row:
                props.extend(p for p in sorted(cell) if p not in props)
        self.propositions = tuple(props)

    def clip_action(self, action):
        return np.mod(np.asarray(action, dtype=float).reshape(1), 2 * math.pi)

    def reset(self, rng):
        if self.start is not None:
            return np.array(self.start, dtype=float)
        return rng.uniform([0.0, 0.0], [self.width, self.height])

    def step(self, state, action, rng):
        theta = float(self.clip_action(action)[0])
        d = self.D * (1.0 - rng.random())  # (0, D]
        nxt = np.asarray(state, dtype=float) + d * np.array([math.cos(theta), math.sin(theta)])
        return np.clip(nxt, self.feature_low, self.feature_high)

    def label(self, state):
        c = min(int(float(state[0]) // self.cell_w), self.cols - 1)
        r = min(int(float(state[1]) // self.cell_h), self.rows - 1)
        return self.cells[max(r, 0)][max(c, 0)]


def parse_label_token(token: str, alphabet: Sequence[str] | None = None) -> frozenset:
    token = token.strip()
    if token in (".", ""):
        return frozenset()
    names = [t.strip() for t in token.split("|")]
    for n in names:
        if not _IDENT.fullmatch(n):
            raise LabelGridError(f"unknown token {token!r}")
        if alphabet is not None and n not in alphabet:
            raise LabelGridError(f"unknown proposition {n!r} in token {token!r}")
    return frozenset(names)


def labelgrid_load(path: str | Path, cell_size: float = 1.0, D: float = 1.0,
                   alphabet: Sequence[str] | None = None, start=None) -> LabelGrid:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise LabelGridError(f"{path}: empty grid")
    if len({len(r) for r in rows}) != 1:
        raise LabelGridError(f"{path}: ragged rows (lengths {sorted({len(r) for r in rows})})")
    cells = [[parse_label_token(t, alphabet) for t in r] for r in rows]
    return LabelGrid(cells=cells, width=cell_size * len(rows[0]), height=cell_size * len(rows), D=D, start=start)


def labelgrid_step(env: LabelGrid, state, theta, rng):
    return env.step(state, theta, rng)


def make_env(spec: Mapping) -> Env:
    """Build an environment from the ``env`` section of a config."""
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "ballpass":
        regions = spec.pop("regions", None)
        if regions is not None:
            spec["regions"] = tuple(
                Region(name, tuple(r["center"]), tuple(r.get("size", (80.0, 80.0)))) for name, r in regions.items()
            )
        for key in ("start", "action_bound"):
            if spec.get(key) is not None:
                spec[key] = tuple(spec[key])
        return BallPass(**spec)
    if kind == "cartpole":
        for key in ("green", "yellow"):
            if key in spec:
                spec[key] = tuple(spec[key])
        return CartPole(**spec)
    if kind == "labelgrid":
        path = spec.pop("grid")
        return labelgrid_load(path, **spec)
    raise ValueError(f"unknown env kind {kind!r}")
