"""Small finite instances used by the checks, tests and the CLI."""
from __future__ import annotations

from ..ltl import compile_ltl
from .mdp import FiniteMdp

B1 = "GF Region1 & GF Region2"
C1 = "GF Green & GF Yellow & G !Unsafe"
P_TASK = "F(T1 & F(T2 & F T3)) & G !U"
GOAL_SAFE = "GF goal & G !U"
GF2 = "GF r1 & GF r2"


def branch_mdp() -> FiniteMdp:
    """Arm 0 reaches an absorbing goal w.p. 0.7 (else a dead end); arm 1 hits ``U``."""
    return FiniteMdp(
        n_states=5, n_actions=2,
        transitions={
            (0, 0): ((1, 1.0),), (0, 1): ((4, 1.0),),
            (1, 0): ((2, 0.7), (3, 0.3)),
            (2, 0): ((2, 1.0),), (3, 0): ((3, 1.0),), (4, 0): ((4, 1.0),),
        },
        labels=(frozenset(), frozenset(), frozenset({"goal"}), frozenset(), frozenset({"U"})),
    )


def single_amec_mdp() -> FiniteMdp:
    """A noisy chain into an absorbing goal; reached with probability one."""
    return FiniteMdp(
        n_states=3, n_actions=2,
        transitions={
            (0, 0): ((0, 0.5), (1, 0.5)), (0, 1): ((0, 1.0),),
            (1, 0): ((2, 0.9), (0, 0.1)), (1, 1): ((1, 1.0),),
            (2, 0): ((2, 1.0),),
        },
        labels=(frozenset(), frozenset(), frozenset({"goal"})),
    )


def nmec_trap_mdp() -> FiniteMdp:
    """Action 0 enters a loop that only ever sees ``r1``; action 1 reaches an
    ``r1``/``r2`` loop with probability 0.9."""
    return FiniteMdp(
        n_states=6, n_actions=2,
        transitions={
            (0, 0): ((1, 1.0),), (0, 1): ((3, 0.9), (5, 0.1)),
            (1, 0): ((2, 1.0),), (2, 0): ((1, 1.0),),
            (3, 0): ((4, 1.0),), (4, 0): ((3, 1.0),),
            (5, 0): ((5, 1.0),),
        },
        labels=(frozenset(), frozenset({"r1"}), frozenset(), frozenset({"r1"}), frozenset({"r2"}), frozenset()),
    )


def ballpass_abstraction(slip: float = 0.0) -> FiniteMdp:
    """Free space ``s_f`` (0) and the two regions (1, 2) of the Ball-Pass model.

    At ``s_f`` action ``i`` heads to region ``i + 1``; in a region action 0
    returns to free space and action 1 stays.  ``slip`` is the chance that a
    move out of free space fails.
    """
    go = lambda dst: ((dst, 1.0 - slip), (0, slip)) if slip else ((dst, 1.0),)
    return FiniteMdp(
        n_states=3, n_actions=2,
        transitions={
            (0, 0): go(1), (0, 1): go(2),
            (1, 0): ((0, 1.0),), (1, 1): ((1, 1.0),),
            (2, 0): ((0, 1.0),), (2, 1): ((2, 1.0),),
        },
        labels=(frozenset(), frozenset({"Region1"}), frozenset({"Region2"})),
    )


def line_mdp(success: float = 0.8) -> FiniteMdp:
    """Four cells in a row labelled ``{}, T1, T2, T3``; moves succeed w.p. ``success``."""
    trans = {}
    for s in range(4):
        left, right = max(s - 1, 0), min(s + 1, 3)
        trans[(s, 0)] = ((left, success), (s, 1 - success)) if left != s else ((s, 1.0),)
        trans[(s, 1)] = ((right, success), (s, 1 - success)) if right != s else ((s, 1.0),)
    return FiniteMdp(4, 2, trans, (frozenset(), frozenset({"T1"}), frozenset({"T2"}), frozenset({"T3"})))


def cartpole_abstraction() -> FiniteMdp:
    """Centre (0), Green (1), Yellow (2) and an absorbing fallen state (3).

    Moves between cells are safe; idling at the centre lets the pole fall
    with probability one half.
    """
    return FiniteMdp(
        n_states=4, n_actions=3,
        transitions={
            (0, 0): ((1, 0.9), (0, 0.1)), (0, 1): ((2, 0.9), (0, 0.1)), (0, 2): ((0, 0.5), (3, 0.5)),
            (1, 0): ((1, 1.0),), (1, 1): ((0, 1.0),), (1, 2): ((2, 0.8), (0, 0.2)),
            (2, 0): ((2, 1.0),), (2, 1): ((0, 1.0),), (2, 2): ((1, 0.8), (0, 0.2)),
            (3, 0): ((3, 1.0),),
        },
        labels=(frozenset(), frozenset({"Green"}), frozenset({"Yellow"}), frozenset({"Unsafe"})),
    )


def benchmark_products():
    """(name, mdp, automaton) triples standing in for the benchmark tasks."""
    return [
        ("ballpass_B1", ballpass_abstraction(), compile_ltl(B1)),
        ("ballpass_B1_slip", ballpass_abstraction(0.2), compile_ltl(B1)),
        ("cartpole_C1", cartpole_abstraction(), compile_ltl(C1)),
        ("line_P", line_mdp(), compile_ltl(P_TASK)),
    ]
