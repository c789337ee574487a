import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ltlmodrl.envs import (
    BallPass,
    CartPole,
    LabelGrid,
    LabelGridError,
    ballpass_step,
    cartpole_label,
    cartpole_step,
    labelgrid_load,
    labelgrid_step,
    make_env,
    parse_label_token,
)


# -- Ball-Pass

def test_ballpass_gravity_one_step():
    env = BallPass()
    s = ballpass_step(env, np.array([300.0, 300.0, 0.0, 0.0]), np.zeros(2))
    assert s[1] == pytest.approx(300.0 - 9.8 * 0.05**2)
    assert s[0] == 300.0 and s[2] == 0.0


def test_ballpass_unit_action_from_rest():
    s = BallPass().step(np.array([300.0, 300.0, 0.0, 0.0]), np.array([1.0, 1.0]))
    assert s[2] == pytest.approx(0.05)
    assert s[3] == pytest.approx((1.0 - 9.8) * 0.05)


def test_ballpass_action_clamped_to_bounds():
    env = BallPass()
    s = env.step(np.array([300.0, 300.0, 0.0, 0.0]), np.array([5.0, -3.0]))
    assert s[2] == pytest.approx(0.05)
    assert s[3] == pytest.approx(-9.8 * 0.05)


def test_ballpass_wall_contact():
    env = BallPass(action_bound=(-1.0, 1.0))
    s = env.step(np.array([599.9, 300.0, 10.0, 0.0]), np.zeros(2))
    assert s[0] == 600.0 and s[2] == 0.0
    floor = env.step(np.array([100.0, 0.0, 0.0, 0.0]), np.zeros(2))
    assert floor[1] == 0.0 and floor[3] == 0.0


def test_ballpass_labels():
    env = BallPass()
    assert env.label([150.0, 300.0, 0, 0]) == {"Region1"}
    assert env.label([450.0, 330.0, 0, 0]) == {"Region2"}
    assert env.label([300.0, 300.0, 0, 0]) == frozenset()


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), max_size=40), st.integers(0, 2**16))
def test_ballpass_states_stay_in_bounds(actions, seed):
    env = BallPass(accel_scale=50.0, action_bound=(-1.0, 1.0))
    s = env.reset(np.random.default_rng(seed))
    for a in actions:
        s = env.step(s, np.array(a))
        assert np.all(s >= env.feature_low) and np.all(s <= env.feature_high)
        assert np.all(np.abs(env.normalize(s)) <= 1.0)


def test_ballpass_zero_action_changes_only_vertical_velocity():
    env = BallPass(gravity=9.8)
    s = np.array([200.0, 400.0, 3.0, 1.0])
    nxt = env.step(s, np.zeros(2))
    assert nxt[2] == 3.0
    assert nxt[3] == pytest.approx(1.0 - 9.8 * 0.05)


# -- CartPole

def test_cartpole_equilibrium():
    env = CartPole()
    s = cartpole_step(env, np.zeros(4), np.array([0.0]))
    assert np.array_equal(s, np.zeros(4))


def test_cartpole_push_signs():
    s = CartPole().step(np.zeros(4), np.array([10.0]))
    assert s[1] > 0 and s[3] < 0


def test_cartpole_labels():
    env = CartPole()
    assert cartpole_label(env, [-1.2, 0, 0, 0]) == {"Green"}
    assert cartpole_label(env, [0.0, 0, 0, 0]) == frozenset()
    assert cartpole_label(env, [1.2, 0, 0.3, 0]) == {"Yellow", "Unsafe"}
    assert env.failed([2.5, 0, 0, 0])
    assert not env.failed([0.0, 0, 0.2, 0])


def test_cartpole_reset_range():
    env = CartPole()
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert np.all(np.abs(env.reset(rng)) <= 0.05)


def test_cartpole_deterministic_for_same_actions():
    env = CartPole()
    acts = np.random.default_rng(1).uniform(-10, 10, size=30)

    def roll():
        s = env.reset(np.random.default_rng(3))
        for a in acts:
            s = env.step(s, np.array([a]))
        return s

    assert np.array_equal(roll(), roll())


# -- label grid

def _grid(tmp_path, text):
    p = tmp_path / "g.csv"
    p.write_text(text)
    return p


def test_labelgrid_single_cell(tmp_path):
    env = labelgrid_load(_grid(tmp_path, ".,.,.\n.,M1,.\n.,.,.\n"), cell_size=1.0)
    assert env.label([1.5, 1.5]) == {"M1"}
    assert env.label([0.5, 1.5]) == frozenset()
    assert env.propositions == ("M1",)


def test_labelgrid_all_empty(tmp_path):
    env = labelgrid_load(_grid(tmp_path, ".,.\n.,.\n"))
    rng = np.random.default_rng(0)
    assert all(env.label(rng.uniform(0, 2, size=2)) == frozenset() for _ in range(20))


def test_label_token_separator():
    assert parse_label_token("M1|Mu") == {"M1", "Mu"}
    assert parse_label_token(".") == frozenset()
    with pytest.raises(LabelGridError):
        parse_label_token("M1|2x")
    with pytest.raises(LabelGridError):
        parse_label_token("Zz", alphabet=["M1"])


def test_labelgrid_ragged_and_empty(tmp_path):
    with pytest.raises(LabelGridError, match="ragged"):
        labelgrid_load(_grid(tmp_path, ".,.\n.\n"))
    with pytest.raises(LabelGridError, match="empty"):
        labelgrid_load(_grid(tmp_path, ""))


def test_labelgrid_moves():
    env = LabelGrid(cells=[[frozenset()] * 10] * 10, width=10.0, height=10.0, D=2.0)
    rng = np.random.default_rng(0)
    s = labelgrid_step(env, np.array([5.0, 5.0]), 0.0, rng)
    assert 0 < s[0] - 5.0 <= 2.0 and s[1] == 5.0
    s = env.step(np.array([5.0, 5.0]), math.pi / 2, rng)
    assert s[0] == pytest.approx(5.0) and s[1] > 5.0
    s = env.step(np.array([9.9, 5.0]), 2 * math.pi, rng)  # wraps to heading 0
    assert s[0] == 10.0


def test_make_env_kinds(tmp_path):
    bp = make_env({"kind": "ballpass", "regions": {"A": {"center": [10, 10]}}, "action_bound": [-1, 1]})
    assert bp.propositions == ("A",) and bp.action_low[0] == -1.0
    assert isinstance(make_env({"kind": "cartpole"}), CartPole)
    g = make_env({"kind": "labelgrid", "grid": str(_grid(tmp_path, "a,.\n")), "cell_size": 2.0, "D": 1.0})
    assert g.width == 4.0
    with pytest.raises(ValueError):
        make_env({"kind": "nope"})
