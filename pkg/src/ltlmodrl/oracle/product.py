"""Explicit finite embedded product, built by breadth-first closure."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..automaton import Ldgba, automaton_step
from ..epmdp import ProductState, accepting_hits, full_frontier, fv_update, is_accepting
from .mdp import FiniteMdp

REJECT = ProductState(-1, "<reject>", frozenset())
MAX_STATES = 100_000


class ProductOverflowError(RuntimeError):
    pass


@dataclass
class FiniteEpmdp:
    """Reachable part of an MDP x LDGBA product.

    ``succ[x][i]`` and ``prob[x][i]`` hold the successor indices and
    probabilities of the ``i``-th action of ``x``; ``action_labels[x][i]`` is the
    MDP action index or ``("eps", q)``.  Index 0 is the initial state.
    """

    states: list[ProductState]
    action_labels: list[list]
    succ: list[list[np.ndarray]]
    prob: list[list[np.ndarray]]
    accepting: np.ndarray
    hits: list[frozenset]
    sink: np.ndarray
    f: int
    frontier: bool = True
    index: dict = field(default_factory=dict)
    _pairs: tuple | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.states)

    initial = 0

    def n_actions(self, x: int) -> int:
        return len(self.action_labels[x])

    def family(self, i: int) -> frozenset:
        """Product states in the ``i``-th accepting family."""
        return frozenset(x for x in range(self.n) if i in self.hits[x])

    def pairs(self):
        """Flattened (state, action) pairs: offsets, owner state, sparse kernel."""
        if self._pairs is None:
            offsets = np.zeros(self.n + 1, dtype=np.int64)
            for x in range(self.n):
                offsets[x + 1] = offsets[x] + self.n_actions(x)
            owner = np.repeat(np.arange(self.n), np.diff(offsets))
            rows, cols, vals = [], [], []
            for x in range(self.n):
                for i, (t, p) in enumerate(zip(self.succ[x], self.prob[x])):
                    rows.append(np.full(len(t), offsets[x] + i))
                    cols.append(t)
                    vals.append(p)
            P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(int(offsets[-1]), self.n))
            self._pairs = (offsets, owner, P)
        return self._pairs

    def policy_matrix(self, policy: Sequence[int]) -> sp.csr_matrix:
        offsets, _, P = self.pairs()
        return P[offsets[:-1] + np.asarray(policy, dtype=np.int64)]


def build_product(mdp: FiniteMdp, a: Ldgba, frontier: bool = True, max_states: int = MAX_STATES) -> FiniteEpmdp:
    """Breadth-first closure from ``(s0, q0, full frontier)``.

    With ``frontier=False`` the frontier never changes, which yields the plain
    product used as a counterexample.  An automaton dead end leads to the
    absorbing ``REJECT`` state.
    """
    F = a.accepting_sets
    x0 = ProductState(mdp.initial, a.initial, full_frontier(a.f))
    states = [x0]
    index = {x0: 0}
    labels_out: list[list] = []
    succ_out: list[list[np.ndarray]] = []
    prob_out: list[list[np.ndarray]] = []
    queue = deque([0])

    def intern(x: ProductState) -> int:
        i = index.get(x)
        if i is None:
            if len(states) >= max_states:
                raise ProductOverflowError(f"product exceeds {max_states} states")
            i = index[x] = len(states)
            states.append(x)
            queue.append(i)
        return i

    def expand(i: int):
        x = states[i]
        if x == REJECT:
            return [("stay",)], [np.array([i])], [np.array([1.0])]
        T_next = fv_update(x.q, x.T, F)[0] if frontier else x.T
        labs, succs, probs = [], [], []
        q_next = automaton_step(a, x.q, mdp.labels[x.s])
        for act in mdp.actions(x.s):
            dist = mdp.dist(x.s, act)
            if q_next is None:
                idx = [intern(REJECT)]
                ps = [1.0]
            else:
                merged: dict[int, float] = {}
                for s2, p in dist:
                    if p > 0:
                        j = intern(ProductState(s2, q_next, T_next))
                        merged[j] = merged.get(j, 0.0) + p
                idx, ps = list(merged), list(merged.values())
            labs.append(act)
            succs.append(np.array(idx, dtype=np.int64))
            probs.append(np.array(ps))
        if x.q in a.q_n:
            for q2 in a.eps_successors.get(x.q, ()):
                labs.append(("eps", q2))
                succs.append(np.array([intern(ProductState(x.s, q2, T_next))], dtype=np.int64))
                probs.append(np.array([1.0]))
        return labs, succs, probs

    while queue:
        i = queue.popleft()
        while len(labels_out) <= i:
            labels_out.append(None)
            succ_out.append(None)
            prob_out.append(None)
        labels_out[i], succ_out[i], prob_out[i] = expand(i)

    accepting = np.array([x != REJECT and is_accepting(x, F) for x in states])
    hits = [frozenset() if x == REJECT else accepting_hits(x, F) for x in states]
    sink = np.array([x == REJECT or x.q in a.sinks for x in states])
    return FiniteEpmdp(states, labels_out, succ_out, prob_out, accepting, hits, sink, a.f, frontier, index)


def simulate(p: FiniteEpmdp, n_runs: int, length: int, rng: np.random.Generator,
             policy: Sequence[int] | None = None) -> np.ndarray:
    """State-index matrix of shape ``(n_runs, length)``, vectorised over runs.

    Without a policy every step picks a uniformly random enabled action.
    """
    offsets, owner, P = p.pairs()
    P = P.tocsr()
    indptr, indices, data = P.indptr, P.indices, P.data
    cum = np.zeros_like(data)
    for r in range(P.shape[0]):  # per-row cumulative probabilities
        lo, hi = indptr[r], indptr[r + 1]
        cum[lo:hi] = np.cumsum(data[lo:hi])
        cum[hi - 1] = np.inf  # guard against round-off
    n_act = np.diff(offsets)
    out = np.empty((n_runs, length), dtype=np.int64)
    x = np.zeros(n_runs, dtype=np.int64)
    pol = None if policy is None else np.asarray(policy, dtype=np.int64)
    for t in range(length):
        out[:, t] = x
        if t == length - 1:
            break
        if pol is None:
            act = (rng.random(n_runs) * n_act[x]).astype(np.int64)
        else:
            act = pol[x]
        row = offsets[x] + act
        u = rng.random(n_runs)
        lo = indptr[row]
        k = np.zeros(n_runs, dtype=np.int64)
        # rows are short; advance each run until its cumulative mass covers u
        active = np.ones(n_runs, dtype=bool)
        while active.any():
            ix = lo + k
            active &= cum[ix] < u
            k[active] += 1
        x = indices[lo + k]
    return out
