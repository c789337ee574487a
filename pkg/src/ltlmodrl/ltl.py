"""A small LTL fragment and its direct translation to LDGBAs.

Two task shapes are recognised, each optionally conjoined with safety
constraints ``G p`` (``p`` propositional):

* sequential eventualities  ``F(p1 & F(p2 & ... F pk))``
* conjunction of recurrences ``G F p1 & ... & G F pk``

Anything else must be translated by an external tool and imported through the
JSON automaton format (:func:`ltlmodrl.automaton.load_automaton`).
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .automaton import Edge, Ldgba
from .guards import FALSE, TRUE, Const, Guard, Not, Var, conj, disj, neg


class LtlSyntaxError(ValueError):
    pass


class FragmentError(ValueError):
    pass


_JSON_HINT = "translate it externally and load the automaton with the JSON import path (`automaton validate`/`load_automaton`)"


@dataclass(frozen=True)
class Temporal:
    op: str  # "F", "G" or "X"
    arg: object

    def __str__(self):
        return f"{self.op}({self.arg})"


@dataclass(frozen=True)
class LtlAnd:
    args: tuple

    def __str__(self):
        return " & ".join(f"({a})" for a in self.args)


@dataclass(frozen=True)
class LtlOr:
    args: tuple

    def __str__(self):
        return " | ".join(f"({a})" for a in self.args)


@dataclass(frozen=True)
class LtlNot:
    arg: object

    def __str__(self):
        return f"!({self.arg})"


@dataclass(frozen=True)
class LtlFormula:
    """A parsed formula tagged with the task pattern it belongs to."""

    tree: object
    pattern: str  # "sequential" or "recurrence"
    goals: tuple[Guard, ...]
    avoid: Guard  # label condition that violates safety; FALSE when unconstrained
    alphabet: tuple[str, ...]

    @property
    def has_safety(self) -> bool:
        return self.avoid != FALSE


_TOKEN = re.compile(r"\s*(<>|\[\]|->|<->|[!&|()]|[A-Za-z_][A-Za-z0-9_]*)")
_KEYWORD_OPS = {"F": "F", "G": "G", "X": "X", "<>": "F", "[]": "G"}


def _tokenize(text: str) -> list[tuple[str, int]]:
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise LtlSyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r} at position {pos}")
        out.append((m.group(1), m.start(1)))
        pos = m.end()
    out.append(("", len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i][0]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def parse(self):
        node = self.disjunction()
        tok, pos = self.take()
        if tok:
            raise LtlSyntaxError(f"unexpected token {tok!r} at position {pos}")
        return node

    def disjunction(self):
        parts = [self.conjunction()]
        while self.peek() == "|":
            self.take()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else LtlOr(tuple(parts))

    def conjunction(self):
        parts = [self.unary()]
        while self.peek() == "&":
            self.take()
            parts.append(self.unary())
        if len(parts) == 1:
            return parts[0]
        flat = []
        for p in parts:
            flat.extend(p.args if isinstance(p, LtlAnd) else [p])
        return LtlAnd(tuple(flat))

    def unary(self):
        tok, pos = self.take()
        if tok == "!":
            return LtlNot(self.unary())
        if tok in _KEYWORD_OPS or re.fullmatch(r"[FGX]{2,}", tok):
            ops = [_KEYWORD_OPS.get(tok, tok)] if tok in _KEYWORD_OPS else list(tok)
            if "X" in ops:
                raise FragmentError(f"next operator unsupported (position {pos}): the fragment excludes X")
            node = self.unary()
            for op in reversed(ops):
                node = Temporal(op, node)
            return node
        if tok in ("->", "<->"):
            raise LtlSyntaxError(f"implication is not supported at position {pos}; rewrite with !, &, |")
        if tok == "(":
            node = self.disjunction()
            close, cpos = self.take()
            if close != ")":
                raise LtlSyntaxError(f"expected ')' at position {cpos}")
            return node
        if tok == "true":
            return TRUE
        if tok == "false":
            return FALSE
        if tok and (tok[0].isalpha() or tok[0] == "_"):
            return Var(tok)
        raise LtlSyntaxError("unexpected end of formula" if not tok else f"unexpected token {tok!r} at position {pos}")


def _propositional(node) -> Guard | None:
    """Convert a temporal-free subtree to a guard, or ``None``."""
    if isinstance(node, (Var, Const)):
        return node
    if isinstance(node, LtlNot):
        g = _propositional(node.arg)
        return None if g is None else neg(g)
    if isinstance(node, LtlAnd):
        gs = [_propositional(a) for a in node.args]
        return None if any(g is None for g in gs) else conj(*gs)
    if isinstance(node, LtlOr):
        gs = [_propositional(a) for a in node.args]
        return None if any(g is None for g in gs) else disj(*gs)
    return None


def _sequential_goals(node) -> list[Guard] | None:
    """Match ``F(p1 & F(p2 & ... F pk))``."""
    if not (isinstance(node, Temporal) and node.op == "F"):
        return None
    body = node.arg
    g = _propositional(body)
    if g is not None:
        return [g]
    if isinstance(body, LtlAnd):
        props = [a for a in body.args if _propositional(a) is not None]
        rest = [a for a in body.args if _propositional(a) is None]
        if len(rest) == 1 and props:
            tail = _sequential_goals(rest[0])
            if tail is not None:
                return [conj(*map(_propositional, props))] + tail
    return None


def _check_negations(node):
    if isinstance(node, LtlNot) and _propositional(node.arg) is None:
        raise FragmentError(f"negation of a temporal subformula is outside the supported fragment; {_JSON_HINT}")
    for child in getattr(node, "args", ()) or ():
        _check_negations(child)
    if isinstance(node, (Temporal, LtlNot)):
        _check_negations(node.arg)


def _atoms_in_order(node, out: list[str]):
    if isinstance(node, Var):
        if node.name not in out:
            out.append(node.name)
    elif isinstance(node, (Temporal, LtlNot, Not)):
        _atoms_in_order(node.arg, out)
    elif hasattr(node, "args"):
        for a in node.args:
            _atoms_in_order(a, out)


def parse_ltl(text: str) -> LtlFormula:
    """Parse ``text`` and recognise its task pattern.

    Operators: ``F``/``<>``, ``G``/``[]``, ``&``, ``|``, ``!``; propositional
    subformulas may appear wherever a proposition may.
    """
    tree = _Parser(text).parse()
    _check_negations(tree)
    conjuncts = tree.args if isinstance(tree, LtlAnd) else (tree,)
    safety: list[Guard] = []
    recurrences: list[Guard] = []
    sequences: list[list[Guard]] = []
    for c in conjuncts:
        if isinstance(c, Temporal) and c.op == "G":
            p = _propositional(c.arg)
            if p is not None:
                safety.append(p)
                continue
            inner = c.arg
            if isinstance(inner, Temporal) and inner.op == "F" and _propositional(inner.arg) is not None:
                recurrences.append(_propositional(inner.arg))
                continue
        seq = _sequential_goals(c)
        if seq is not None:
            sequences.append(seq)
            continue
        raise FragmentError(f"conjunct {c} is outside the supported fragment; {_JSON_HINT}")

    if recurrences and sequences:
        raise FragmentError(f"mixing recurrence and reachability goals is outside the supported fragment; {_JSON_HINT}")
    if len(sequences) > 1:
        raise FragmentError(f"several independent reachability chains are outside the supported fragment; {_JSON_HINT}")
    if not recurrences and not sequences:
        raise FragmentError(f"formula has no goal (F or G F); {_JSON_HINT}")

    avoid = disj(*(neg(p) for p in safety)) if safety else FALSE
    alphabet: list[str] = []
    _atoms_in_order(tree, alphabet)
    if recurrences:
        return LtlFormula(tree, "recurrence", tuple(recurrences), avoid, tuple(alphabet))
    return LtlFormula(tree, "sequential", tuple(sequences[0]), avoid, tuple(alphabet))


SINK = "q_sink"


def compile_ltl(formula: LtlFormula | str) -> Ldgba:
    """Build the LDGBA for a fragment formula.

    Sequential tasks give a chain ``q0 .. qk`` accepting at ``qk``; recurrence
    tasks give ``q0`` (no goal seen) plus one state ``qi`` per goal, entered
    whenever goal ``i`` holds, with ``F = {{q1}, .., {qk}}``.  When several
    recurrence goals hold at once the lowest-index goal wins, so the result is
    exact for mutually exclusive goal regions.  A safety violation leads to the
    absorbing ``q_sink``.
    """
    if isinstance(formula, str):
        formula = parse_ltl(formula)
    goals, avoid = formula.goals, formula.avoid
    k = len(goals)
    names = [f"q{i}" for i in range(k + 1)]
    safe = neg(avoid)
    edges: list[Edge] = []

    def add(src, guard, dst):
        edges.append(Edge(src, guard, dst))

    if formula.pattern == "sequential":
        for i in range(k):
            if formula.has_safety:
                add(names[i], avoid, SINK)
            add(names[i], conj(goals[i], safe), names[i + 1])
            add(names[i], neg(disj(goals[i], avoid)), names[i])
        if formula.has_safety:
            add(names[k], safe, names[k])
            add(names[k], avoid, SINK)
        else:
            add(names[k], TRUE, names[k])
        accepting = (frozenset({names[k]}),)
    else:
        for src in names:
            if formula.has_safety:
                add(src, avoid, SINK)
            for i, g in enumerate(goals):
                add(src, conj(g, *(neg(h) for h in goals[:i]), safe), names[i + 1])
            add(src, neg(disj(*goals, avoid)), names[0])
        accepting = tuple(frozenset({names[i + 1]}) for i in range(k))

    states = list(names)
    if formula.has_safety:
        states.append(SINK)
        add(SINK, TRUE, SINK)
    return Ldgba(
        alphabet=formula.alphabet,
        states=tuple(states),
        initial=names[0],
        q_d=frozenset(states),
        q_n=frozenset(),
        edges=tuple(edges),
        eps_edges=(),
        accepting_sets=accepting,
    )
