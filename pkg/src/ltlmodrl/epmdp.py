"""On-the-fly embedded product of an environment and an LDGBA.

Product states are ``(s, q, T)`` where ``T`` is the tracking frontier: the
indices (0-based) of accepting sets not yet visited in the current round.  As
in the product definition, a successor carries the frontier *before* its own
automaton state is processed; the frontier update for ``q`` runs when the
product leaves that state.  Acceptance is therefore a function of the state
alone.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Sequence

import numpy as np

from .automaton import Ldgba, automaton_step

Frontier = frozenset  # frozenset[int]


class DeadEndError(RuntimeError):
    """The automaton has no successor and no epsilon move was taken."""


class EpsAction(NamedTuple):
    target: str


class ProductState(NamedTuple):
    s: Any
    q: str
    T: frozenset


@dataclass
class StepOutcome:
    next: ProductState
    label: frozenset
    was_accepting: bool
    round_flag: bool
    entered_sink: bool


def fv_update(q: str, T: frozenset, accepting_sets: Sequence[frozenset]) -> tuple[frozenset, bool]:
    """Frontier update: drop the sets containing ``q``; reset when already empty."""
    hits = frozenset(j for j, fj in enumerate(accepting_sets) if q in fj)
    if hits & T:
        return T - hits, False
    if hits and not T:
        return frozenset(range(len(accepting_sets))) - hits, True
    return T, False


def is_accepting(x: ProductState, accepting_sets: Sequence[frozenset]) -> bool:
    """``q`` lies in a set that is still in the frontier.

    An empty frontier means the round is complete and every set counts as
    fresh again; without that, a single accepting set could be rewarded once.
    """
    if not x.T:
        return any(x.q in fj for fj in accepting_sets)
    return any(x.q in accepting_sets[j] for j in x.T)


def accepting_hits(x: ProductState, accepting_sets: Sequence[frozenset]) -> frozenset:
    live = x.T if x.T else range(len(accepting_sets))
    return frozenset(j for j in live if x.q in accepting_sets[j])


def full_frontier(f: int) -> frozenset:
    return frozenset(range(f))


class EmbeddedProduct:
    """Synchronous product of ``env`` and automaton ``a``, stepped lazily."""

    def __init__(self, env, a: Ldgba):
        self.env = env
        self.automaton = a
        self.accepting_sets = a.accepting_sets
        self.f = a.f
        self.sinks = a.sinks
        self._delta: dict[tuple[str, frozenset], str | None] = {}

    def delta(self, q: str, label: frozenset) -> str | None:
        key = (q, label)
        try:
            return self._delta[key]
        except KeyError:
            nxt = self._delta[key] = automaton_step(self.automaton, q, label)
            return nxt

    def initial(self, rng: np.random.Generator) -> ProductState:
        return ProductState(self.env.reset(rng), self.automaton.initial, full_frontier(self.f))

    def eps_targets(self, q: str) -> tuple[str, ...]:
        return self.automaton.eps_successors.get(q, ())

    def is_accepting(self, x: ProductState) -> bool:
        return is_accepting(x, self.accepting_sets)

    def step(self, x: ProductState, action, rng: np.random.Generator) -> StepOutcome:
        label = self.env.label(x.s)
        if isinstance(action, EpsAction):
            if x.q not in self.automaton.q_n or action.target not in self.eps_targets(x.q):
                raise ValueError(f"no epsilon move {x.q}->{action.target}")
            s_next, q_next = x.s, action.target
        else:
            q_next = self.delta(x.q, label)
            if q_next is None:
                raise DeadEndError(f"automaton state {x.q!r} has no successor under {sorted(label)}")
            s_next = self.env.step(x.s, action, rng)
        T_next, _ = fv_update(x.q, x.T, self.accepting_sets)
        nxt = ProductState(s_next, q_next, T_next)
        _, flag = fv_update(q_next, T_next, self.accepting_sets)
        return StepOutcome(
            next=nxt,
            label=label,
            was_accepting=is_accepting(nxt, self.accepting_sets),
            round_flag=flag,
            entered_sink=q_next in self.sinks,
        )


def product_step(product: EmbeddedProduct, x: ProductState, action, rng) -> StepOutcome:
    return product.step(x, action, rng)


@dataclass
class Run:
    states: list[ProductState]
    actions: list = field(default_factory=list)
    outcomes: list[StepOutcome] = field(default_factory=list)
    failed: bool = False
    reason: str = ""

    def __len__(self):
        return len(self.states)


def random_run(product: EmbeddedProduct, length: int, seed: int) -> Run:
    """Random run of ``length`` states; a dead end yields ``failed=True``.

    At states with epsilon successors the move is drawn uniformly among the
    environment action and each epsilon target.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = np.random.default_rng(seed)
    x = product.initial(rng)
    run = Run([x])
    while len(run.states) < length:
        eps = product.eps_targets(x.q)
        pick = int(rng.integers(len(eps) + 1)) if eps else 0
        action = EpsAction(eps[pick - 1]) if pick else product.env.sample_action(rng)
        try:
            out = product.step(x, action, rng)
        except DeadEndError as exc:
            run.failed, run.reason = True, str(exc)
            break
        run.actions.append(action)
        run.outcomes.append(out)
        x = out.next
        run.states.append(x)
    return run


def label_sequence_check(run: Sequence[ProductState], accepting_sets: Sequence[frozenset], k: int) -> bool:
    """Every accepting set was hit by an accepting state at least ``k`` times."""
    counts = np.zeros(len(accepting_sets), dtype=int)
    for x in run:
        for j in accepting_hits(x, accepting_sets):
            counts[j] += 1
    return bool(np.all(counts >= k))


def encode_observation(x: ProductState, f: int, normalizer) -> np.ndarray:
    """Normalized environment features followed by the frontier bits."""
    feats = normalizer(x.s)
    bits = np.zeros(f)
    for j in x.T:
        bits[j] = 1.0
    return np.concatenate([feats, bits])


def frontier_mask(T: frozenset) -> int:
    return sum(1 << j for j in T)


def write_trace(path, run: Run) -> None:
    """CSV trace: step, state components, q, T bitmask, action, accepting, round flag."""
    states = run.states
    s_dim = len(np.atleast_1d(states[0].s))
    a_dim = max((len(np.atleast_1d(a)) for a in run.actions if not isinstance(a, EpsAction)), default=1)
    header = ["step", *[f"s{i}" for i in range(s_dim)], "q", "T", *[f"a{i}" for i in range(a_dim)], "was_accepting", "round_flag"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, x in enumerate(states):
            if t < len(run.actions):
                a = run.actions[t]
                acts = [f"eps:{a.target}"] + [""] * (a_dim - 1) if isinstance(a, EpsAction) else [repr(float(v)) for v in np.atleast_1d(a)]
                out = run.outcomes[t]
                tail = [int(out.was_accepting), int(out.round_flag)]
            else:
                acts, tail = [""] * a_dim, ["", ""]
            w.writerow([t, *[repr(float(v)) for v in np.atleast_1d(x.s)], x.q, frontier_mask(x.T), *acts, *tail])
