"""Numerical checks of the convergence and correctness statements on finite instances."""
from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..automaton import Ldgba
from ..epmdp import fv_update
from ..shaping import RewardParams, ShapingState, fphi_update
from .product import REJECT, FiniteEpmdp, simulate
from .solve import (
    amec_states,
    chain_classes,
    chain_reach_probability,
    max_reach_probability,
    value_iteration,
)


def random_policy(p: FiniteEpmdp, rng: np.random.Generator) -> np.ndarray:
    return np.array([int(rng.integers(p.n_actions(x))) for x in range(p.n)], dtype=np.int64)


def sweep_params(gamma_F: float, ratio: float = 0.1) -> RewardParams:
    """Parameters with ``(1 - gamma_F) / (1 - r_F) = ratio``."""
    return RewardParams(r_F=1.0 - (1.0 - gamma_F) / ratio, gamma_F=gamma_F)


# ------------------------------------------------------------------ lemma 1

@dataclass
class Lemma1Result:
    ok: bool
    classes: int
    witnesses: list = field(default_factory=list)  # (sorted class states, sorted partial hits)


def check_lemma1(p: FiniteEpmdp, policy: Sequence[int]) -> Lemma1Result:
    """Every recurrent class meets all accepting families or none of them."""
    mc = chain_classes(p, policy)
    bad = []
    for cls in mc.recurrent:
        hits = frozenset().union(*(p.hits[x] for x in cls))
        if hits and len(hits) != p.f:
            bad.append((sorted(cls), sorted(hits)))
    return Lemma1Result(not bad, len(mc.recurrent), bad)


# ------------------------------------------------------------------ lemma 2

@dataclass
class Lemma2Result:
    ok: bool
    runs: int
    length: int
    violations: int


def check_lemma2(p: FiniteEpmdp, params: RewardParams, runs: int = 10_000, length: int = 200,
                 seed: int = 0) -> Lemma2Result:
    """``0 <= gF*D(x[t+1:]) <= D(x[t:]) <= 1 - rF + rF*D(x[t+1:]) <= 1`` on random runs."""
    paths = simulate(p, runs, length, np.random.default_rng(seed))
    acc = p.accepting[paths]
    D = np.zeros((runs, length + 1))
    for t in range(length - 1, -1, -1):
        D[:, t] = np.where(acc[:, t], (1.0 - params.r_F) + params.r_F * D[:, t + 1], params.gamma_F * D[:, t + 1])
    cur, nxt = D[:, :-1], D[:, 1:]
    lower = params.gamma_F * nxt
    upper = (1.0 - params.r_F) + params.r_F * nxt
    ok = (0.0 <= lower) & (lower <= cur) & (cur <= upper) & (upper <= 1.0)
    return Lemma2Result(bool(ok.all()), runs, length, int((~ok).sum()))


# ---------------------------------------------------------------- theorem 1

@dataclass
class Theorem1Row:
    gamma_F: float
    r_F: float
    U0: float
    reach: list[float]
    gap: float


@dataclass
class Theorem1Result:
    rows: list[Theorem1Row]
    monotone: bool

    @property
    def final_gap(self) -> float:
        return self.rows[-1].gap


def check_theorem1(p: FiniteEpmdp, gammas: Sequence[float] = (0.99, 0.999, 0.9999), ratio: float = 0.1) -> Theorem1Result:
    """Gap between ``U(x0)`` and the maximal reachability of the accepting families.

    The reachability vector has one entry per family; the gap is the distance
    from ``U(x0)`` to the interval spanned by that vector.
    """
    reach = [float(max_reach_probability(p, p.family(i))[p.initial]) for i in range(p.f)]
    lo, hi = min(reach), max(reach)
    rows = []
    for g in gammas:
        params = sweep_params(g, ratio)
        u0 = float(value_iteration(p, params).U[p.initial])
        gap = max(lo - u0, u0 - hi, 0.0)
        rows.append(Theorem1Row(g, params.r_F, u0, reach, gap))
    gaps = [r.gap for r in rows]
    monotone = all(b < a or (a == 0.0 and b == 0.0) for a, b in zip(gaps, gaps[1:]))
    return Theorem1Result(rows, monotone)


# ---------------------------------------------------------------- theorem 3

@dataclass
class Theorem3Result:
    ok: bool
    greedy_reach: float
    max_reach: float
    amec_states: int
    tolerance: float = 0.05


def check_theorem3(p: FiniteEpmdp, params: RewardParams = RewardParams(), tolerance: float = 0.05) -> Theorem3Result:
    """The greedy policy reaches the AMEC union nearly as often as possible."""
    target = amec_states(p)
    vt = value_iteration(p, params)
    greedy = float(chain_reach_probability(p, vt.policy, target)[p.initial]) if target else 0.0
    best = float(max_reach_probability(p, target)[p.initial]) if target else 0.0
    return Theorem3Result(abs(best - greedy) <= tolerance, greedy, best, len(target), tolerance)


# ----------------------------------------------------- shaping invariance

def extend_with_shaping(p: FiniteEpmdp, a: Ldgba, params: RewardParams,
                        phi: Callable[[object, frozenset], float] | None = None):
    """Product over ``(x, T_Phi)`` with base and shaped expected rewards per pair.

    Returns ``(ext, base_pair, shaped_pair, phi_values)``.
    """
    F = a.accepting_sets
    init = ShapingState.initial(a)

    def potential(x, T_phi):
        if phi is not None:
            return phi(x, T_phi)
        return params.eta_Phi * (1.0 - params.r_F) if x.q in T_phi else 0.0

    def flag(x) -> bool:
        return False if x == REJECT else fv_update(x.q, x.T, F)[1]

    start = (p.initial, init.T_Phi)
    states, index, queue = [start], {start: 0}, deque([0])
    succ, prob, labels, base_r, shaped_r = [], [], [], [], []
    while queue:
        i = queue.popleft()
        xi, tphi = states[i]
        x = p.states[xi]
        R = (1.0 - params.r_F) if p.accepting[xi] else 0.0
        g = params.r_F if p.accepting[xi] else params.gamma_F
        phi_x = potential(x, tphi)
        ss, ps, bs, shs = [], [], [], []
        for t, pr in zip(p.succ[xi], p.prob[xi]):
            idx, shaped = [], 0.0
            for y, q in zip(t, pr):
                y = int(y)
                xn = p.states[y]
                shaped += q * (R + g * potential(xn, tphi) - phi_x)
                tn = tphi if xn == REJECT else fphi_update(xn.q, ShapingState(tphi, init.T_Phi0), flag(xn)).T_Phi
                key = (y, tn)
                j = index.get(key)
                if j is None:
                    j = index[key] = len(states)
                    states.append(key)
                    queue.append(j)
                idx.append(j)
            ss.append(np.array(idx, dtype=np.int64))
            ps.append(np.asarray(pr, dtype=float))
            bs.append(R)
            shs.append(shaped)
        while len(succ) <= i:
            succ.append(None); prob.append(None); labels.append(None); base_r.append(None); shaped_r.append(None)
        succ[i], prob[i], labels[i], base_r[i], shaped_r[i] = ss, ps, list(p.action_labels[xi]), bs, shs

    ext = FiniteEpmdp(
        states=states, action_labels=labels, succ=succ, prob=prob,
        accepting=np.array([p.accepting[x] for x, _ in states]),
        hits=[p.hits[x] for x, _ in states],
        sink=np.array([p.sink[x] for x, _ in states]),
        f=p.f, frontier=p.frontier, index=index,
    )
    phis = np.array([potential(p.states[x], t) for x, t in states])
    return ext, np.concatenate([np.asarray(b) for b in base_r]), np.concatenate([np.asarray(s) for s in shaped_r]), phis


@dataclass
class ShapingResult:
    ok: bool
    states: int
    mismatches: list = field(default_factory=list)
    max_offset_error: float = 0.0  # max |U_base - U_shaped - Phi|


def check_shaping_invariance(p: FiniteEpmdp, a: Ldgba, params: RewardParams = RewardParams(),
                             phi: Callable | None = None, tol: float = 1e-9) -> ShapingResult:
    """Greedy action sets with base and shaped rewards agree at every extended state."""
    ext, base_pair, shaped_pair, phis = extend_with_shaping(p, a, params, phi)
    base = value_iteration(ext, params, pair_reward=base_pair)
    shaped = value_iteration(ext, params, pair_reward=shaped_pair)
    sb, ss = base.greedy_sets(ext, tol), shaped.greedy_sets(ext, tol)
    bad = [(i, sorted(x), sorted(y)) for i, (x, y) in enumerate(zip(sb, ss)) if x != y]
    offset = float(np.max(np.abs(base.U - shaped.U - phis)))
    return ShapingResult(not bad, ext.n, bad, offset)


# ----------------------------------------------------- Monte-Carlo agreement

@dataclass
class McResult:
    ok: bool
    U0: float
    mean: float
    stderr: float
    runs: int
    length: int
    truncation: float


def check_mc_agreement(p: FiniteEpmdp, params: RewardParams, runs: int = 100_000, length: int | None = None,
                       seed: int = 0, sigmas: float = 3.0) -> McResult:
    """Mean truncated return of greedy rollouts against the value-iteration ``U(x0)``."""
    vt = value_iteration(p, params)
    if length is None:
        length = int(np.ceil(np.log(1e-12) / np.log(params.gamma_F)))
    paths = simulate(p, runs, length, np.random.default_rng(seed), policy=vt.policy)
    acc = p.accepting[paths]
    ret = np.zeros(runs)
    for t in range(length - 1, -1, -1):
        ret = np.where(acc[:, t], (1.0 - params.r_F) + params.r_F * ret, params.gamma_F * ret)
    mean = float(ret.mean())
    se = float(ret.std(ddof=1) / np.sqrt(runs))
    u0 = float(vt.U[p.initial])
    trunc = params.gamma_F ** length
    ok = abs(mean - u0) <= sigmas * se + trunc
    return McResult(bool(ok), u0, mean, se, runs, length, trunc)


def to_jsonable(obj):
    """Dataclass results to plain JSON types."""
    if hasattr(obj, "__dataclass_fields__"):
        return {k: to_jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj
