import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ltlmodrl.epmdp import ProductState
from ltlmodrl.ltl import compile_ltl
from ltlmodrl.shaping import (
    RewardParams,
    ShapingState,
    base_reward,
    discount,
    fphi_update,
    potential,
    return_of_run,
    shaped_reward,
    suffix_returns,
    truncation_bound,
)

PHI_P = compile_ltl("F(T1 & F(T2 & F T3)) & G !U")
F_P = PHI_P.accepting_sets
DEFAULT = RewardParams()


def x(q, T=frozenset({0})):
    return ProductState(np.zeros(1), q, frozenset(T))


def test_params_validation_and_ratio():
    assert DEFAULT.ratio == pytest.approx(0.01)
    with pytest.raises(ValueError):
        RewardParams(r_F=1.0)
    with pytest.raises(ValueError):
        RewardParams(gamma_F=0.0)
    with pytest.raises(ValueError):
        RewardParams(eta_Phi=0.0)
    with pytest.warns(UserWarning):
        RewardParams(r_F=0.9, gamma_F=0.5)


def test_base_reward_and_discount():
    assert base_reward(x("q3"), F_P, DEFAULT) == pytest.approx(0.01)
    assert discount(x("q3"), F_P, DEFAULT) == 0.99
    assert base_reward(x("q1"), F_P, DEFAULT) == 0.0
    assert discount(x("q1"), F_P, DEFAULT) == 0.9999


def test_return_examples():
    assert return_of_run([x("q0")] * 4, F_P, DEFAULT) == 0.0
    # three accepting states in a row: the empty frontier keeps q3 accepting
    run = [x("q3", {0}), x("q3", set()), x("q3", set())]
    assert return_of_run(run, F_P, DEFAULT) == pytest.approx(0.029701, abs=1e-12)
    assert return_of_run([x("q2"), x("q3")], F_P, DEFAULT) == pytest.approx(0.009999, abs=1e-12)


def test_truncation_bound():
    assert truncation_bound(0, DEFAULT) == 1.0
    assert truncation_bound(10, DEFAULT) == pytest.approx(0.9999**10)


@given(st.lists(st.booleans(), max_size=60),
       st.floats(0.5, 0.999), st.floats(0.9, 0.99999))
def test_lemma_bounds_on_every_suffix(flags, r_F, gamma_F):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p = RewardParams(r_F=r_F, gamma_F=gamma_F)
    D = suffix_returns(flags, p)
    for t in range(len(flags)):
        assert 0.0 <= gamma_F * D[t + 1] <= D[t] <= 1.0 - r_F + r_F * D[t + 1] <= 1.0


def test_fphi_examples():
    s = ShapingState.initial(PHI_P)
    assert s.T_Phi == {"q1", "q2", "q3"}
    s1 = fphi_update("q1", s, False)
    assert s1.T_Phi == {"q2", "q3"}
    assert fphi_update("q3", s1, True).T_Phi == {"q1", "q2"}
    assert fphi_update("q0", s1, False) == s1


def test_potential_examples():
    s = ShapingState.initial(PHI_P)
    assert potential(x("q1"), s, DEFAULT) == pytest.approx(0.01)
    assert potential(x("q0"), s, DEFAULT) == 0.0
    assert potential(x("q_sink"), s, DEFAULT) == 0.0
    assert potential(x("q1"), s, RewardParams(eta_Phi=3.0)) == pytest.approx(0.03)


def test_shaped_reward_worked_example():
    s = ShapingState.initial(PHI_P)
    r = shaped_reward(x("q0"), x("q1"), s, F_P, DEFAULT)
    assert r == pytest.approx(0.009999, abs=1e-15)
    s = fphi_update("q1", s, False)
    assert shaped_reward(x("q1"), x("q2"), s, F_P, DEFAULT) == pytest.approx(0.009999, abs=1e-15)
    assert shaped_reward(x("q1"), x("q1"), s, F_P, DEFAULT) == 0.0


def test_shaping_telescopes_without_discount():
    """With gamma = 1 and a fixed T_Phi the potential terms cancel exactly."""
    a = compile_ltl("G F Region1 & G F Region2")
    q_path = ["q0", "q1", "q1", "q0", "q2", "q0", "q0"]
    states = [ProductState(None, q, frozenset({0, 1})) for q in q_path]
    fixed = ShapingState.initial(a)
    total = sum(potential(n, fixed, DEFAULT) - potential(c, fixed, DEFAULT) for c, n in zip(states, states[1:]))
    assert total == 0.0

    # with the frontier update each first visit is paid once and never taken back
    shaping, total = fixed, 0.0
    for cur, nxt in zip(states, states[1:]):
        total += potential(nxt, shaping, DEFAULT) - potential(cur, shaping, DEFAULT)
        shaping = fphi_update(nxt.q, shaping, False)
    assert total == pytest.approx(2 * (1 - DEFAULT.r_F))
