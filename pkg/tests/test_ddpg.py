from pathlib import Path

import numpy as np
import pytest

from ltlmodrl.automaton import load_automaton
from ltlmodrl.ddpg import (
    Agent,
    NetConfig,
    ReplayBuffer,
    TrainConfig,
    evaluate,
    pack_bundle,
    single_ddpg_baseline,
    task_mode,
    train,
    unpack_bundle,
    write_log,
)
from ltlmodrl.envs import BallPass, Region
from ltlmodrl.epmdp import EpsAction, ProductState, full_frontier
from ltlmodrl.ltl import compile_ltl
from ltlmodrl.nn import WeightFileError
from ltlmodrl.shaping import RewardParams

FIXTURES = Path(__file__).parent / "fixtures"
SMALL = NetConfig(hidden=(16,))
B1 = "G F Region1 & G F Region2"


def quick(**kw) -> TrainConfig:
    base = dict(episodes=3, horizon=20, batch_size=8, warmup=10, buffer_capacity=500, seed=4)
    base.update(kw)
    return TrainConfig(**base)


class LineEnv:
    """1-D line labelled ``a`` on the right and ``b`` on the left (or both everywhere)."""

    state_dim, action_dim = 1, 1
    action_low, action_high = np.array([-1.0]), np.array([1.0])
    propositions = ("a", "b")

    def __init__(self, both: bool = False):
        self.both = both

    def reset(self, rng):
        return np.array([0.0])

    def step(self, s, a, rng):
        return np.clip(s + a, -3.0, 3.0)

    def label(self, s):
        if self.both:
            return frozenset({"a", "b"})
        return frozenset({"a"}) if s[0] >= 0 else frozenset({"b"})

    def failed(self, s):
        return False

    def sample_action(self, rng):
        return rng.uniform(-1, 1, size=1)

    def normalize(self, s):
        return np.asarray(s, dtype=float) / 3.0


# -- configs and buffers

def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(noise_corr=1.0)
    with pytest.raises(ValueError):
        TrainConfig(horizon=0)
    with pytest.raises(ValueError):
        NetConfig(hidden=())
    with pytest.raises(ValueError):
        NetConfig(tau=0.0)


def test_replay_ring_buffer_wraps():
    buf = ReplayBuffer(3)
    for i in range(5):
        buf.push([i], [0.0], float(i), 0.9, [i + 1], 0, False)
    assert len(buf) == 3
    assert sorted(buf.column("reward")) == [2.0, 3.0, 4.0]


def test_task_mode():
    assert task_mode(compile_ltl(B1)) == "rounds"
    assert task_mode(compile_ltl("F(T1 & F T2) & G !U")) == "reach"


# -- acting

def test_exploit_is_deterministic_and_zero_noise_matches():
    env = BallPass()
    agent = Agent(env, compile_ltl(B1), SMALL, seed=1)
    x = ProductState(np.array([100.0, 50.0, 1.0, 0.0]), "q0", full_frontier(2))
    a1, a2 = agent.select_action(x), agent.select_action(x)
    assert np.array_equal(a1, a2)
    a3 = agent.select_action(x, explore=True, sigma=0.0, rng=np.random.default_rng(0))
    assert np.array_equal(a1, a3)
    noisy = agent.select_action(x, explore=True, sigma=0.5, rng=np.random.default_rng(0))
    assert np.all(noisy >= env.action_low) and np.all(noisy <= env.action_high)


def test_correlated_noise_keeps_module_state():
    env = BallPass()
    agent = Agent(env, compile_ltl(B1), SMALL, seed=1)
    agent.noise_corr = 0.9
    x = ProductState(np.array([300.0, 300.0, 0.0, 0.0]), "q0", full_frontier(2))
    rng = np.random.default_rng(0)
    agent.act(x, explore=True, sigma=0.1, rng=rng)
    assert set(agent.noise_state) == {"q0"}
    agent.reset_noise()
    assert not agent.noise_state


def test_deterministic_state_has_no_eps_branch():
    a = load_automaton(FIXTURES / "eps_ldgba_union.json", check=False)
    agent = Agent(LineEnv(), a, SMALL, seed=0)
    assert agent.modules["q1"].n_eps == 2
    assert agent.modules["q2"].n_eps == 0 and agent.modules["q0"].n_eps == 0
    x = ProductState(np.array([1.0]), "q2", full_frontier(1))
    for seed in range(20):
        act = agent.select_action(x, explore=True, sigma=1.0, rng=np.random.default_rng(seed))
        assert not isinstance(act, EpsAction)


def test_eps_preference_threshold():
    a = load_automaton(FIXTURES / "eps_ldgba_union.json", check=False)
    agent = Agent(LineEnv(), a, SMALL, seed=0)
    bundle = agent.modules["q1"]
    x = ProductState(np.array([1.0]), "q1", full_frontier(1))
    last = bundle.actor.params[-1]  # output bias: [continuous, pref_q2, pref_q3]
    bundle.actor.params[-2][...] = 0.0
    last[...] = [0.0, -1.0, -1.0]
    assert not isinstance(agent.select_action(x), EpsAction)
    last[...] = [0.0, 0.5, 0.5]
    assert agent.select_action(x) == EpsAction("q2")  # tie goes to the lower index
    last[...] = [0.0, 0.5, 2.0]
    assert agent.select_action(x) == EpsAction("q3")


def test_baseline_rejects_eps_automata():
    a = load_automaton(FIXTURES / "eps_ldgba_union.json", check=False)
    with pytest.raises(ValueError, match="epsilon"):
        Agent(LineEnv(), a, SMALL, modular=False)


def test_baseline_observation_dimension():
    env, a = BallPass(), compile_ltl(B1)
    assert Agent(env, a, SMALL, modular=False).obs_dim == env.state_dim + a.f + len(a.states)
    assert Agent(env, a, SMALL).obs_dim == env.state_dim + a.f


# -- learning

def _filled_agent(terminal: bool, next_module: int):
    env, a = BallPass(), compile_ltl(B1)
    agent = Agent(env, a, SMALL, seed=2)
    buf = agent.modules["q0"].buffer
    obs = np.linspace(-0.5, 0.5, agent.obs_dim)
    for _ in range(8):
        buf.push(obs, np.array([0.3, -0.2]), 0.25, 0.9, obs[::-1], next_module, terminal)
    return agent


def test_terminal_target_is_reward():
    agent = _filled_agent(terminal=True, next_module=1)
    agent.bootstrap_trace = []
    rng = np.random.default_rng(0)
    for _ in range(400):
        agent.train_step("q0", 8, rng)
    assert agent.bootstrap_trace == []  # no bootstrap at all
    from ltlmodrl.nn import forward

    b = agent.modules["q0"]
    obs = b.buffer.column("obs")[:1]
    q = forward(b.critic, np.concatenate([obs, b.buffer.column("act")[:1]], axis=1))[0][0, 0]
    assert q == pytest.approx(0.25, abs=1e-3)


def test_bootstrap_reads_successor_module():
    agent = _filled_agent(terminal=False, next_module=2)
    agent.bootstrap_trace = []
    agent.train_step("q0", 8, np.random.default_rng(0))
    assert agent.bootstrap_trace == [("q0", "q2", 8)]
    # module q2 untouched by q0's update
    before = [p.copy() for p in agent.modules["q2"].critic_target.params]
    agent.train_step("q0", 8, np.random.default_rng(1))
    assert all(np.array_equal(p, q) for p, q in zip(before, agent.modules["q2"].critic_target.params))


def test_self_loop_bootstraps_own_targets():
    agent = _filled_agent(terminal=False, next_module=0)
    agent.bootstrap_trace = []
    agent.train_step("q0", 8, np.random.default_rng(0))
    assert agent.bootstrap_trace == [("q0", "q0", 8)]


def test_insufficient_buffer_is_noop():
    agent = Agent(BallPass(), compile_ltl(B1), SMALL)
    assert agent.train_step("q0", 8, np.random.default_rng(0)) is None


def test_train_zero_episodes():
    agent, log = train(BallPass(), compile_ltl(B1), quick(episodes=0), SMALL)
    assert log == []
    assert all(len(b.buffer) == 0 for b in agent.modules.values())


def test_train_routes_and_discounts():
    regions = (Region("Region1", (300.0, 0.0), (600.0, 80.0)), Region("Region2", (300.0, 500.0), (20.0, 20.0)))
    env = BallPass(regions=regions)
    params = RewardParams()
    agent, log = train(env, compile_ltl(B1), quick(episodes=2, horizon=30), SMALL, params)
    assert len(log) == 2
    q0, q1 = agent.modules["q0"].buffer, agent.modules["q1"].buffer
    assert len(q0) + len(q1) + len(agent.modules["q2"].buffer) == sum(r.steps for r in log)
    # transitions leaving q1 with a fresh set get r_F, everything else gamma_F
    assert set(np.round(q0.column("gamma"), 6)) == {params.gamma_F}
    assert set(np.round(q1.column("gamma"), 6)) <= {params.r_F, params.gamma_F}
    assert params.r_F in set(np.round(q1.column("gamma"), 6))
    # frontier bits of q0 samples always read {0, 1}: nothing visited before leaving q0
    assert np.all(q0.column("obs")[:, -2:] == 1.0)


def test_train_is_deterministic(tmp_path):
    a, env = compile_ltl(B1), BallPass()
    _, l1 = train(env, a, quick(), SMALL)
    _, l2 = train(env, a, quick(), SMALL)
    write_log(tmp_path / "a.csv", l1)
    write_log(tmp_path / "b.csv", l2)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert all(r.wall_ms == 0 for r in l1)


def test_baseline_is_reproducible():
    a, env = compile_ltl(B1), BallPass()
    _, l1 = single_ddpg_baseline(env, a, quick(), SMALL)
    _, l2 = single_ddpg_baseline(env, a, quick(), SMALL)
    assert [r.row() for r in l1] == [r.row() for r in l2]


def test_eps_training_runs():
    a = load_automaton(FIXTURES / "eps_ldgba_union.json", check=False)
    agent, log = train(LineEnv(both=True), a, quick(episodes=4, horizon=15), SMALL)
    assert len(log) == 4
    # epsilon choices are stored as one-hot bits after the continuous action
    acts = agent.modules["q1"].buffer.column("act")
    assert acts.shape[1] == 3
    assert set(np.unique(acts[:, 1:])) <= {0.0, 1.0}


def test_train_propagates_dead_end():
    from ltlmodrl.epmdp import DeadEndError

    a = load_automaton(FIXTURES / "eps_ldgba_union.json", check=False)
    with pytest.raises(DeadEndError):
        train(LineEnv(), a, quick(episodes=20, horizon=30), SMALL)


# -- evaluation and persistence

def test_evaluate_sink_gives_zero():
    # the unsafe region covers the whole arena
    env = BallPass(regions=(Region("U", (300.0, 300.0), (700.0, 700.0)),
                            Region("T1", (0.0, 590.0), (1.0, 1.0)), Region("T2", (1.0, 590.0), (1.0, 1.0))))
    a = compile_ltl("F(T1 & F T2) & G !U")
    agent = Agent(env, a, SMALL)
    res = evaluate(agent, env, a, runs=5, horizon=10)
    assert res.success_rate == 0.0
    assert all(r.sink for r in res.runs)


def test_evaluate_rejects_bad_arguments():
    a = compile_ltl(B1)
    agent = Agent(BallPass(), a, SMALL)
    with pytest.raises(ValueError):
        evaluate(agent, BallPass(), a, runs=0)
    with pytest.raises(ValueError):
        evaluate(agent, BallPass(), a, k=0)


def test_checkpoint_round_trip(tmp_path):
    env, a = BallPass(), compile_ltl(B1)
    agent, _ = train(env, a, quick(), SMALL)
    agent.save(tmp_path, {"seed": 4})
    fresh = Agent(env, a, SMALL, seed=99)
    manifest = fresh.load(tmp_path)
    assert manifest["seed"] == 4
    x = ProductState(np.array([200.0, 100.0, 0.5, -0.5]), "q1", frozenset({1}))
    assert np.array_equal(agent.select_action(x), fresh.select_action(x))
    with pytest.raises(ValueError):
        Agent(env, a, SMALL, modular=False).load(tmp_path)
    with pytest.raises(ValueError, match="architecture"):
        Agent(env, a, NetConfig(hidden=(8,))).load(tmp_path)


def test_bundle_file_errors():
    agent = Agent(BallPass(), compile_ltl(B1), SMALL)
    blob = pack_bundle(agent.modules["q0"])
    actor, critic = unpack_bundle(blob)
    assert actor.same_architecture(agent.modules["q0"].actor)
    with pytest.raises(WeightFileError):
        unpack_bundle(b"XXXXXXXX" + blob[8:])
    with pytest.raises(WeightFileError):
        unpack_bundle(blob[:-5])
