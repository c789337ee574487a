"""Value iteration, reachability, end components and chain classes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..shaping import RewardParams
from .product import FiniteEpmdp


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class ValueTable:
    U: np.ndarray
    Q: np.ndarray  # per (state, action) pair, flattened by FiniteEpmdp.pairs()
    policy: np.ndarray
    residuals: list[float] = field(default_factory=list)
    iterations: int = 0

    def greedy_sets(self, p: FiniteEpmdp, tol: float = 1e-9) -> list[frozenset]:
        offsets = p.pairs()[0]
        out = []
        for x in range(p.n):
            q = self.Q[offsets[x]: offsets[x + 1]]
            out.append(frozenset(np.nonzero(q >= q.max() - tol)[0].tolist()))
        return out


def reward_vectors(p: FiniteEpmdp, params: RewardParams) -> tuple[np.ndarray, np.ndarray]:
    R = np.where(p.accepting, 1.0 - params.r_F, 0.0)
    g = np.where(p.accepting, params.r_F, params.gamma_F)
    return R, g


def _argmax_lowest(Qp: np.ndarray, offsets: np.ndarray, tol: float = 0.0, prefer=None) -> np.ndarray:
    """Greedy action per state; ties within ``tol`` go to ``prefer`` or the lowest index."""
    n = len(offsets) - 1
    best = np.maximum.reduceat(Qp, offsets[:-1])
    pol = np.empty(n, dtype=np.int64)
    for x in range(n):
        q = Qp[offsets[x]: offsets[x + 1]]
        if prefer is not None and q[prefer[x]] >= best[x] - tol:
            pol[x] = prefer[x]
        else:
            pol[x] = int(np.nonzero(q >= best[x] - tol)[0][0])
    return pol


def evaluate_policy(p: FiniteEpmdp, policy: Sequence[int], R: np.ndarray, g: np.ndarray,
                    pair_reward: np.ndarray | None = None) -> np.ndarray:
    """Exact value of a deterministic policy: solve ``(I - diag(g) P_pi) U = r``."""
    offsets = p.pairs()[0]
    Ppi = p.policy_matrix(policy)
    r = R if pair_reward is None else pair_reward[offsets[:-1] + np.asarray(policy)]
    A = sp.identity(p.n, format="csc") - sp.diags(g) @ Ppi
    return np.atleast_1d(spsolve(A.tocsc(), r))


def value_iteration(p: FiniteEpmdp, params: RewardParams, tol: float = 1e-10, max_iters: int = 2_000_000,
                    exact: bool = True, pair_reward: np.ndarray | None = None,
                    discount: np.ndarray | None = None) -> ValueTable:
    """Bellman iteration ``U(x) <- max_u sum_x' p(x'|x,u) (R(x) + gamma(x) U(x'))``.

    ``pair_reward`` replaces ``R(x)`` by an expected reward per (state, action)
    pair, which is how transition-dependent shaped rewards enter.  With
    ``exact`` the greedy policy is polished by policy iteration so that the
    returned values are exact up to linear-solve round-off.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    offsets, owner, P = p.pairs()
    R, g = reward_vectors(p, params)
    if discount is not None:
        g = discount
    r_pair = R[owner] if pair_reward is None else pair_reward
    g_pair = g[owner]
    U = np.zeros(p.n)
    residuals = []
    it = 0
    while True:
        Qp = r_pair + g_pair * (P @ U)
        U_new = np.maximum.reduceat(Qp, offsets[:-1])
        res = float(np.max(np.abs(U_new - U)))
        residuals.append(res)
        U = U_new
        it += 1
        if res < tol:
            break
        if it >= max_iters:
            raise ConvergenceError("value iteration did not converge", res)
    Qp = r_pair + g_pair * (P @ U)
    policy = _argmax_lowest(Qp, offsets)
    if exact:
        for _ in range(100):
            U = evaluate_policy(p, policy, R if pair_reward is None else None, g, pair_reward)
            Qp = r_pair + g_pair * (P @ U)
            new = _argmax_lowest(Qp, offsets, tol=1e-12, prefer=policy)
            if np.array_equal(new, policy):
                break
            policy = new
        policy = _argmax_lowest(Qp, offsets, tol=1e-12)
    return ValueTable(U, Qp, policy, residuals, it)


# -------------------------------------------------------------- reachability

def _prob0_max(p: FiniteEpmdp, target: np.ndarray) -> np.ndarray:
    """States from which no action sequence can reach ``target``."""
    pred: list[set] = [set() for _ in range(p.n)]
    for x in range(p.n):
        for t in p.succ[x]:
            for y in t:
                pred[int(y)].add(x)
    seen = target.copy()
    stack = list(np.nonzero(target)[0])
    while stack:
        y = stack.pop()
        for x in pred[y]:
            if not seen[x]:
                seen[x] = True
                stack.append(x)
    return ~seen


def _prob1_max(p: FiniteEpmdp, target: np.ndarray) -> np.ndarray:
    """States from which some strategy reaches ``target`` almost surely."""
    U = np.ones(p.n, dtype=bool)
    while True:
        R = target.copy()
        while True:
            grown = R.copy()
            for x in np.nonzero(U & ~R)[0]:
                for t in p.succ[x]:
                    if U[t].all() and R[t].any():
                        grown[x] = True
                        break
            if np.array_equal(grown, R):
                break
            R = grown
        if np.array_equal(R, U):
            return U
        U = R


def max_reach_probability(p: FiniteEpmdp, target: Iterable[int] | np.ndarray, tol: float = 1e-12,
                          max_iters: int = 10_000_000) -> np.ndarray:
    """Maximal probability of eventually reaching ``target`` from every state."""
    tgt = np.zeros(p.n, dtype=bool)
    if isinstance(target, np.ndarray) and target.dtype == bool:
        tgt |= target
    else:
        tgt[list(target)] = True
    zero = _prob0_max(p, tgt)
    one = _prob1_max(p, tgt)
    offsets, owner, P = p.pairs()
    v = np.where(one, 1.0, 0.0)
    fixed = zero | one
    it = 0
    while True:
        new = np.maximum.reduceat(P @ v, offsets[:-1])
        new[fixed] = v[fixed]
        res = float(np.max(np.abs(new - v)))
        v = new
        it += 1
        if res < tol:
            return v
        if it >= max_iters:
            raise ConvergenceError("reachability iteration did not converge", res)


def chain_reach_probability(p: FiniteEpmdp, policy: Sequence[int], target) -> np.ndarray:
    """Exact probability of reaching ``target`` in the chain induced by ``policy``."""
    tgt = np.zeros(p.n, dtype=bool)
    tgt[list(target)] = True
    Ppi = p.policy_matrix(policy).tocsr()
    g = nx.DiGraph()
    g.add_nodes_from(range(p.n))
    rows, cols = Ppi.nonzero()
    g.add_edges_from(zip(cols.tolist(), rows.tolist()))  # reversed edges
    can = np.zeros(p.n, dtype=bool)
    for y in np.nonzero(tgt)[0]:
        can[y] = True
        can[list(nx.descendants(g, int(y)))] = True
    unknown = np.nonzero(can & ~tgt)[0]
    v = tgt.astype(float)
    if len(unknown):
        A = sp.identity(len(unknown), format="csc") - Ppi[unknown][:, unknown]
        b = np.asarray(Ppi[unknown][:, np.nonzero(tgt)[0]].sum(axis=1)).ravel()
        v[unknown] = np.atleast_1d(spsolve(A.tocsc(), b))
    return v


# ----------------------------------------------------------- end components

@dataclass(frozen=True)
class Mec:
    states: frozenset
    actions: dict  # state -> frozenset of action indices

    def hits(self, p: FiniteEpmdp) -> frozenset:
        return frozenset().union(*(p.hits[x] for x in self.states))


def mec_decomposition(p: FiniteEpmdp) -> list[Mec]:
    """Iterative SCC refinement: drop actions that leave their SCC until stable."""
    allowed = {x: set(range(p.n_actions(x))) for x in range(p.n)}
    while True:
        g = nx.DiGraph()
        g.add_nodes_from(allowed)
        for x, acts in allowed.items():
            for u in acts:
                g.add_edges_from((x, int(y)) for y in p.succ[x][u])
        comp = {}
        for c, scc in enumerate(nx.strongly_connected_components(g)):
            for x in scc:
                comp[x] = c
        changed = False
        for x in list(allowed):
            keep = {u for u in allowed[x] if all(int(y) in comp and comp[int(y)] == comp[x] for y in p.succ[x][u])}
            if keep != allowed[x]:
                changed = True
                allowed[x] = keep
            if not allowed[x]:
                del allowed[x]
                changed = True
        if not changed:
            break
    groups: dict[int, set] = {}
    for x in allowed:
        groups.setdefault(comp[x], set()).add(x)
    mecs = [Mec(frozenset(s), {x: frozenset(allowed[x]) for x in sorted(s)}) for s in groups.values()]
    return sorted(mecs, key=lambda m: min(m.states))


def classify_mecs(mecs: Sequence[Mec], p: FiniteEpmdp) -> list[str]:
    out = []
    for m in mecs:
        h = m.hits(p)
        out.append("AMEC" if len(h) == p.f else ("RMEC" if not h else "NMEC"))
    return out


def amec_states(p: FiniteEpmdp) -> frozenset:
    mecs = mec_decomposition(p)
    return frozenset().union(*(m.states for m, c in zip(mecs, classify_mecs(mecs, p)) if c == "AMEC"))


# ------------------------------------------------------------ chain classes

@dataclass
class McAnalysis:
    transient: frozenset
    recurrent: list[frozenset]


def chain_classes(p: FiniteEpmdp, policy: Sequence[int]) -> McAnalysis:
    """Transient states and BSCCs of the chain induced by ``policy``, from the initial state."""
    g = nx.DiGraph()
    for x in range(p.n):
        g.add_node(x)
        g.add_edges_from((x, int(y)) for y in p.succ[x][policy[x]])
    reach = nx.descendants(g, p.initial) | {p.initial}
    sub = g.subgraph(reach)
    cond = nx.condensation(sub)
    recurrent = [frozenset(cond.nodes[c]["members"]) for c in cond.nodes if cond.out_degree(c) == 0]
    recurrent.sort(key=min)
    transient = frozenset(reach) - frozenset().union(*recurrent)
    return McAnalysis(transient, recurrent)
