"""Limit-deterministic generalized Buchi automata (LDGBA).

States are strings; edges carry propositional guards.  The automaton is
immutable, so it can be shared freely between rollouts.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple

import networkx as nx
import numpy as np

from .guards import Guard, GuardSyntaxError, UnknownPropositionError, parse_guard

MAX_EXHAUSTIVE_ALPHABET = 16


class AutomatonError(ValueError):
    """Malformed automaton file or an automaton that fails validation."""


class AmbiguousTransitionError(RuntimeError):
    """Several guards hold at a nondeterministic state."""


class Edge(NamedTuple):
    src: str
    guard: Guard
    dst: str


@dataclass(frozen=True)
class Violation:
    clause: str
    detail: str

    def __str__(self):
        return f"[{self.clause}] {self.detail}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def clauses(self) -> set[str]:
        return {v.clause for v in self.violations}

    def __str__(self):
        return "\n".join(map(str, self.violations)) or "ok"


@dataclass(frozen=True)
class Ldgba:
    alphabet: tuple[str, ...]
    states: tuple[str, ...]
    initial: str
    q_d: frozenset[str]
    q_n: frozenset[str]
    edges: tuple[Edge, ...]
    eps_edges: tuple[tuple[str, str], ...] = ()
    accepting_sets: tuple[frozenset[str], ...] = field(default_factory=tuple)

    @property
    def f(self) -> int:
        return len(self.accepting_sets)

    @cached_property
    def out_edges(self) -> dict[str, tuple[Edge, ...]]:
        out: dict[str, list[Edge]] = {q: [] for q in self.states}
        for e in self.edges:
            out.setdefault(e.src, []).append(e)
        return {q: tuple(es) for q, es in out.items()}

    @cached_property
    def eps_successors(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {q: [] for q in self.states}
        for src, dst in self.eps_edges:
            out.setdefault(src, []).append(dst)
        return {q: tuple(ds) for q, ds in out.items()}

    @cached_property
    def state_index(self) -> dict[str, int]:
        return {q: i for i, q in enumerate(self.states)}

    @cached_property
    def sinks(self) -> frozenset[str]:
        return detect_sinks(self)

    def accepting_indices(self, q: str) -> frozenset[int]:
        return frozenset(j for j, fj in enumerate(self.accepting_sets) if q in fj)

    def digest(self) -> str:
        return hashlib.sha256(dumps_automaton(self).encode()).hexdigest()[:16]


def automaton_step(a: Ldgba, q: str, label: Iterable[str]) -> str | None:
    """Successor of ``q`` reading ``label``; ``None`` when no guard holds.

    Raises :class:`AmbiguousTransitionError` if guards to different states hold
    at once (only possible at nondeterministic states of a valid automaton).
    """
    if q not in a.state_index:
        raise KeyError(f"unknown automaton state {q!r}")
    targets = {e.dst for e in a.out_edges[q] if e.guard.holds(label)}
    if not targets:
        return None
    if len(targets) > 1:
        raise AmbiguousTransitionError(f"state {q!r} has {len(targets)} enabled successors {sorted(targets)}")
    return next(iter(targets))


def validate(a: Ldgba) -> ValidationReport:
    if len(a.alphabet) > MAX_EXHAUSTIVE_ALPHABET:
        raise AutomatonError(
            f"totality check infeasible: alphabet has {len(a.alphabet)} propositions (limit {MAX_EXHAUSTIVE_ALPHABET})"
        )
    v: list[Violation] = []
    states = set(a.states)
    if len(states) != len(a.states):
        v.append(Violation("structure", "duplicate state ids"))
    if len(set(a.alphabet)) != len(a.alphabet):
        v.append(Violation("structure", "duplicate propositions in alphabet"))
    if a.initial not in states:
        v.append(Violation("structure", f"initial state {a.initial!r} is not a state"))
    for e in a.edges:
        for end in (e.src, e.dst):
            if end not in states:
                v.append(Violation("structure", f"edge {e.src}->{e.dst} references unknown state {end!r}"))
        unknown = e.guard.atoms() - set(a.alphabet)
        if unknown:
            v.append(Violation("structure", f"edge {e.src}->{e.dst} guard uses unknown propositions {sorted(unknown)}"))
    for src, dst in a.eps_edges:
        for end in (src, dst):
            if end not in states:
                v.append(Violation("structure", f"eps-edge {src}->{dst} references unknown state {end!r}"))

    if a.q_d | a.q_n != states:
        v.append(Violation("partition", f"Q_D and Q_N do not cover the states: missing {sorted(states - (a.q_d | a.q_n))}"))
    if (a.q_d | a.q_n) - states:
        v.append(Violation("partition", f"partition names unknown states {sorted((a.q_d | a.q_n) - states)}"))
    if a.q_d & a.q_n:
        v.append(Violation("partition", f"Q_D and Q_N overlap on {sorted(a.q_d & a.q_n)}"))

    for src, dst in a.eps_edges:
        if src in a.q_d:
            v.append(Violation("eps_in_deterministic", f"eps-edge {src}->{dst} leaves deterministic state {src!r}"))

    if not a.accepting_sets:
        v.append(Violation("accepting_sets", "at least one accepting set is required"))
    for j, fj in enumerate(a.accepting_sets):
        outside = fj - a.q_d
        if outside:
            v.append(Violation("accepting_outside_deterministic", f"F_{j + 1} contains non-deterministic states {sorted(outside)}"))

    if any(x.clause == "structure" for x in v):
        return ValidationReport(tuple(v))

    # exhaustive totality / determinism / closure over all 2^|AP| letters
    for q in a.states:
        if q not in a.q_d:
            continue
        out = a.out_edges[q]
        for e in out:
            if e.dst not in a.q_d:
                v.append(Violation("deterministic_closure", f"edge {q}->{e.dst} leaves Q_D"))
        tables = [e.guard.table(a.alphabet) for e in out]
        dsts = [e.dst for e in out]
        n_labels = 1 << len(a.alphabet)
        if not tables:
            v.append(Violation("totality", f"deterministic state {q!r} has no outgoing edges"))
            continue
        by_dst: dict[str, np.ndarray] = {}
        for t, d in zip(tables, dsts):
            by_dst[d] = by_dst.get(d, np.zeros(n_labels, dtype=bool)) | t
        count = np.sum(list(by_dst.values()), axis=0)
        missing = np.flatnonzero(count == 0)
        if missing.size:
            v.append(Violation("totality", f"state {q!r} has no successor under label {_mask_label(a, missing[0])}"))
        multi = np.flatnonzero(count > 1)
        if multi.size:
            v.append(Violation("determinism", f"state {q!r} has several successors under label {_mask_label(a, multi[0])}"))
    return ValidationReport(tuple(v))


def _mask_label(a: Ldgba, mask: int) -> str:
    return "{" + ", ".join(p for i, p in enumerate(a.alphabet) if (int(mask) >> i) & 1) + "}"


def graph(a: Ldgba) -> nx.DiGraph:
    """State graph with an arc for every satisfiable guard edge and every eps-edge."""
    g = nx.DiGraph()
    g.add_nodes_from(a.states)
    for e in a.edges:
        if e.guard.table(a.alphabet).any():
            g.add_edge(e.src, e.dst)
    g.add_edges_from(a.eps_edges)
    return g


def detect_sinks(a: Ldgba) -> frozenset[str]:
    """States from which no run can satisfy the generalized Buchi condition."""
    g = graph(a)
    cond = nx.condensation(g)
    good_components = set()
    for c, data in cond.nodes(data=True):
        members = data["members"]
        nontrivial = len(members) > 1 or any(g.has_edge(m, m) for m in members)
        if nontrivial and all(members & fj for fj in a.accepting_sets):
            good_components.add(c)
    # a component is live iff it reaches a good component
    live = set()
    for c in reversed(list(nx.topological_sort(cond))):
        if c in good_components or any(s in live for s in cond.successors(c)):
            live.add(c)
    mapping = cond.graph["mapping"]
    return frozenset(q for q in a.states if mapping[q] not in live)


# ---------------------------------------------------------------- serialization

def to_dict(a: Ldgba) -> dict:
    return {
        "alphabet": list(a.alphabet),
        "states": list(a.states),
        "initial": a.initial,
        "Q_D": [q for q in a.states if q in a.q_d],
        "Q_N": [q for q in a.states if q in a.q_n],
        "edges": [{"src": e.src, "guard": str(e.guard), "dst": e.dst} for e in a.edges],
        "eps_edges": [{"src": s, "dst": d} for s, d in a.eps_edges],
        "accepting_sets": [[q for q in a.states if q in fj] for fj in a.accepting_sets],
    }


_KEYS = {"alphabet", "states", "initial", "Q_D", "Q_N", "edges", "eps_edges", "accepting_sets"}


def _str_list(obj, key) -> list[str]:
    val = obj.get(key)
    if not isinstance(val, list) or not all(isinstance(x, str) for x in val):
        raise AutomatonError(f"schema: {key!r} must be a list of strings")
    return val


def from_dict(obj: dict, check: bool = True) -> Ldgba:
    if not isinstance(obj, dict):
        raise AutomatonError("schema: top level must be an object")
    missing = _KEYS - obj.keys()
    extra = obj.keys() - _KEYS
    if missing:
        raise AutomatonError(f"schema: missing keys {sorted(missing)}")
    if extra:
        raise AutomatonError(f"schema: unknown keys {sorted(extra)}")
    alphabet = _str_list(obj, "alphabet")
    states = _str_list(obj, "states")
    if not isinstance(obj["initial"], str):
        raise AutomatonError("schema: 'initial' must be a string")
    edges = []
    for e in obj["edges"] if isinstance(obj["edges"], list) else [None]:
        if not isinstance(e, dict) or set(e) != {"src", "guard", "dst"} or not all(isinstance(x, str) for x in e.values()):
            raise AutomatonError("schema: each edge needs string fields src, guard, dst")
        try:
            guard = parse_guard(e["guard"], alphabet)
        except (GuardSyntaxError, UnknownPropositionError) as exc:
            raise AutomatonError(f"edge {e['src']}->{e['dst']}: {exc}") from exc
        edges.append(Edge(e["src"], guard, e["dst"]))
    eps = []
    for e in obj["eps_edges"] if isinstance(obj["eps_edges"], list) else [None]:
        if not isinstance(e, dict) or set(e) != {"src", "dst"} or not all(isinstance(x, str) for x in e.values()):
            raise AutomatonError("schema: each eps-edge needs string fields src, dst")
        eps.append((e["src"], e["dst"]))
    acc = obj["accepting_sets"]
    if not isinstance(acc, list) or not all(isinstance(s, list) and all(isinstance(q, str) for q in s) for s in acc):
        raise AutomatonError("schema: 'accepting_sets' must be a list of lists of strings")
    a = Ldgba(
        alphabet=tuple(alphabet),
        states=tuple(states),
        initial=obj["initial"],
        q_d=frozenset(_str_list(obj, "Q_D")),
        q_n=frozenset(_str_list(obj, "Q_N")),
        edges=tuple(edges),
        eps_edges=tuple(eps),
        accepting_sets=tuple(frozenset(s) for s in acc),
    )
    if check:
        report = validate(a)
        if not report.ok:
            raise AutomatonError(f"automaton fails validation:\n{report}")
    return a


def dumps_automaton(a: Ldgba) -> str:
    return json.dumps(to_dict(a), indent=2) + "\n"


def save_automaton(a: Ldgba, path: str | Path) -> None:
    Path(path).write_text(dumps_automaton(a))


def load_automaton(path: str | Path, check: bool = True) -> Ldgba:
    """Read automaton JSON; ``check=False`` skips the structural validation."""
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise AutomatonError(f"malformed automaton file {path}: {exc}") from exc
    return from_dict(obj, check=check)
