"""Propositional guards labelling automaton edges.

A guard is a small immutable expression tree over atomic propositions.  Labels
(the letters of ``2^AP``) are represented as frozensets of proposition names.

Grammar accepted by :func:`parse_guard`::

    expr   := term ('|' term)*
    term   := factor ('&' factor)*
    factor := '!' factor | '(' expr ')' | ident | 'true' | 'false'
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

Label = frozenset  # frozenset[str]


class GuardSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownPropositionError(ValueError):
    pass


class Guard:
    """Base class of guard nodes."""

    def holds(self, label: Iterable[str]) -> bool:
        raise NotImplementedError

    def atoms(self) -> set[str]:
        raise NotImplementedError

    def table(self, alphabet: Sequence[str]) -> np.ndarray:
        """Truth value under every label of ``alphabet``, indexed by bitmask.

        Bit ``i`` of the mask says whether ``alphabet[i]`` is in the label.
        """
        masks = np.arange(1 << len(alphabet), dtype=np.int64)
        return self._table(masks, {ap: i for i, ap in enumerate(alphabet)})

    def _table(self, masks: np.ndarray, index: dict[str, int]) -> np.ndarray:
        raise NotImplementedError

    # precedence for printing: 0 = or, 1 = and, 2 = unary/atom
    _prec = 2

    def _wrap(self, parent_prec: int) -> str:
        text = str(self)
        return f"({text})" if self._prec < parent_prec else text


@dataclass(frozen=True)
class Const(Guard):
    value: bool

    def holds(self, label):
        return self.value

    def atoms(self):
        return set()

    def _table(self, masks, index):
        return np.full(masks.shape, self.value, dtype=bool)

    def __str__(self):
        return "true" if self.value else "false"


@dataclass(frozen=True)
class Var(Guard):
    name: str

    def holds(self, label):
        return self.name in label

    def atoms(self):
        return {self.name}

    def _table(self, masks, index):
        return ((masks >> index[self.name]) & 1).astype(bool)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Not(Guard):
    arg: Guard

    def holds(self, label):
        return not self.arg.holds(label)

    def atoms(self):
        return self.arg.atoms()

    def _table(self, masks, index):
        return ~self.arg._table(masks, index)

    def __str__(self):
        return "!" + self.arg._wrap(2)


@dataclass(frozen=True)
class And(Guard):
    args: tuple[Guard, ...]
    _prec = 1

    def holds(self, label):
        return all(a.holds(label) for a in self.args)

    def atoms(self):
        return set().union(*(a.atoms() for a in self.args))

    def _table(self, masks, index):
        out = np.ones(masks.shape, dtype=bool)
        for a in self.args:
            out &= a._table(masks, index)
        return out

    def __str__(self):
        return " & ".join(a._wrap(2) for a in self.args)


@dataclass(frozen=True)
class Or(Guard):
    args: tuple[Guard, ...]
    _prec = 0

    def holds(self, label):
        return any(a.holds(label) for a in self.args)

    def atoms(self):
        return set().union(*(a.atoms() for a in self.args))

    def _table(self, masks, index):
        out = np.zeros(masks.shape, dtype=bool)
        for a in self.args:
            out |= a._table(masks, index)
        return out

    def __str__(self):
        return " | ".join(a._wrap(1) for a in self.args)


TRUE = Const(True)
FALSE = Const(False)


def conj(*args: Guard) -> Guard:
    """Flattening conjunction; drops ``true`` operands."""
    flat: list[Guard] = []
    for a in args:
        if isinstance(a, And):
            flat.extend(a.args)
        elif a == TRUE:
            continue
        else:
            flat.append(a)
    if any(a == FALSE for a in flat):
        return FALSE
    if not flat:
        return TRUE
    return flat[0] if len(flat) == 1 else And(tuple(flat))


def disj(*args: Guard) -> Guard:
    """Flattening disjunction; drops ``false`` operands."""
    flat: list[Guard] = []
    for a in args:
        if isinstance(a, Or):
            flat.extend(a.args)
        elif a == FALSE:
            continue
        else:
            flat.append(a)
    if any(a == TRUE for a in flat):
        return TRUE
    if not flat:
        return FALSE
    return flat[0] if len(flat) == 1 else Or(tuple(flat))


def neg(g: Guard) -> Guard:
    """Negation that folds constants and double negation."""
    if isinstance(g, Const):
        return Const(not g.value)
    if isinstance(g, Not):
        return g.arg
    return Not(g)


def eval_guard(g: Guard, label: Iterable[str]) -> bool:
    return g.holds(label)


def satisfiable(g: Guard, alphabet: Sequence[str]) -> bool:
    return bool(g.table(alphabet).any())


_TOKEN = re.compile(r"\s*(?:(?P<op>[!&|()])|(?P<ident>[A-Za-z_][A-Za-z0-9_]*))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            # skip leading whitespace to report the offending character
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise GuardSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = "op" if m.group("op") else "ident"
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _GuardParser:
    def __init__(self, text: str, alphabet: Iterable[str] | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.alphabet = None if alphabet is None else set(alphabet)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def parse(self) -> Guard:
        g = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise GuardSyntaxError(f"unexpected token {val!r}", pos)
        return g

    def expr(self) -> Guard:
        parts = [self.term()]
        while self.peek()[1] == "|":
            self.take()
            parts.append(self.term())
        return parts[0] if len(parts) == 1 else disj(*parts)

    def term(self) -> Guard:
        parts = [self.factor()]
        while self.peek()[1] == "&":
            self.take()
            parts.append(self.factor())
        return parts[0] if len(parts) == 1 else conj(*parts)

    def factor(self) -> Guard:
        kind, val, pos = self.take()
        if kind == "op" and val == "!":
            return Not(self.factor())
        if kind == "op" and val == "(":
            g = self.expr()
            kind, val, pos = self.take()
            if val != ")":
                raise GuardSyntaxError("expected ')'", pos)
            return g
        if kind == "ident":
            if val == "true":
                return TRUE
            if val == "false":
                return FALSE
            if self.alphabet is not None and val not in self.alphabet:
                raise UnknownPropositionError(f"unknown proposition {val!r} at position {pos}")
            return Var(val)
        raise GuardSyntaxError("expected proposition, '!' or '('" if kind != "end" else "unexpected end of input", pos)


def parse_guard(text: str, alphabet: Iterable[str] | None = None) -> Guard:
    """Parse ``text`` into a guard, checking every proposition against ``alphabet``."""
    return _GuardParser(text, alphabet).parse()
