import itertools
import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ltlmodrl.epmdp import ProductState
from ltlmodrl.ltl import compile_ltl
from ltlmodrl.oracle import (
    REJECT,
    ConvergenceError,
    FiniteEpmdp,
    FiniteMdp,
    MdpError,
    build_product,
    chain_classes,
    check_lemma1,
    check_lemma2,
    check_mc_agreement,
    check_shaping_invariance,
    check_theorem1,
    check_theorem3,
    classify_mecs,
    load_mdp,
    max_reach_probability,
    mec_decomposition,
    random_policy,
    save_mdp,
    value_iteration,
)
from ltlmodrl.oracle.instances import (
    B1,
    GOAL_SAFE,
    P_TASK,
    ballpass_abstraction,
    branch_mdp,
    line_mdp,
    nmec_trap_mdp,
    single_amec_mdp,
)
from ltlmodrl.shaping import RewardParams


def bare(succ, hits=None, f=1):
    """FiniteEpmdp from per-state lists of successor dicts."""
    n = len(succ)
    hits = hits or [frozenset()] * n
    return FiniteEpmdp(
        states=[ProductState(i, "q", frozenset()) for i in range(n)],
        action_labels=[list(range(len(s))) for s in succ],
        succ=[[np.array(list(d), dtype=np.int64) for d in s] for s in succ],
        prob=[[np.array(list(d.values()), dtype=float) for d in s] for s in succ],
        accepting=np.array([bool(h) for h in hits]),
        hits=[frozenset(h) for h in hits],
        sink=np.zeros(n, dtype=bool),
        f=f,
    )


# -- MDP files

def test_mdp_round_trip(tmp_path):
    m = branch_mdp()
    save_mdp(m, tmp_path / "m.json")
    back = load_mdp(tmp_path / "m.json")
    assert back.to_dict() == m.to_dict()


def test_mdp_validation():
    with pytest.raises(MdpError):
        FiniteMdp(1, 1, {(0, 0): ((0, 0.5),)}, (frozenset(),))
    with pytest.raises(MdpError):
        FiniteMdp(2, 1, {(0, 0): ((1, 1.0),)}, (frozenset(), frozenset()))
    with pytest.raises(MdpError):
        FiniteMdp.from_dict({"n_states": 1, "n_actions": 1, "transitions": [], "labels": [[]], "bogus": 1})


# -- product construction

def test_single_state_product():
    m = FiniteMdp(1, 1, {(0, 0): ((0, 1.0),)}, (frozenset({"a"}),))
    p = build_product(m, compile_ltl("G F a"))
    # (q0, {1}) -> (q1, {1}) -> (q1, {}) forever: the frontier is stored before q is processed
    assert p.n == 3
    mecs = mec_decomposition(p)
    assert classify_mecs(mecs, p) == ["AMEC"]
    assert chain_classes(p, [0] * p.n).recurrent == [{2}] and p.accepting[2]


def test_ballpass_product_splits_free_space_by_frontier():
    p = build_product(ballpass_abstraction(), compile_ltl(B1))
    free = [x for x in p.states if x != REJECT and x.s == 0]
    assert len({x.T for x in free}) >= 2
    # with the frontier a deterministic policy can alternate the two regions
    vt = value_iteration(p, RewardParams(0.9, 0.99))
    assert check_lemma1(p, vt.policy).ok
    assert any(len(c) > 1 for c in chain_classes(p, vt.policy).recurrent)


def test_dead_end_goes_to_reject():
    m = FiniteMdp(2, 1, {(0, 0): ((1, 1.0),), (1, 0): ((1, 1.0),)}, (frozenset(), frozenset({"b"})))
    from ltlmodrl.automaton import load_automaton
    from pathlib import Path
    a = load_automaton(Path(__file__).parent / "fixtures" / "eps_ldgba_union.json", check=False)
    p = build_product(m, a)
    assert REJECT in p.states


# -- value iteration

def test_no_accepting_state_gives_zero_values():
    m = FiniteMdp(2, 1, {(0, 0): ((1, 1.0),), (1, 0): ((0, 1.0),)}, (frozenset(), frozenset()))
    vt = value_iteration(build_product(m, compile_ltl("G F a & G !U")), RewardParams())
    assert np.all(vt.U == 0.0)


def test_branch_value_near_reach_probability():
    p = build_product(branch_mdp(), compile_ltl(GOAL_SAFE))
    vt = value_iteration(p, RewardParams(0.99, 0.9999))
    assert abs(vt.U[p.initial] - 0.7) < 0.05
    assert vt.policy[p.initial] == 0


def test_value_iteration_convergence_error():
    p = build_product(branch_mdp(), compile_ltl(GOAL_SAFE))
    with pytest.raises(ConvergenceError) as err:
        value_iteration(p, RewardParams(0.99, 0.9999), max_iters=3, exact=False)
    assert err.value.residual > 0


# -- MECs

def test_mec_examples():
    absorbing = bare([[{0: 1.0}]])
    assert [m.states for m in mec_decomposition(absorbing)] == [{0}]
    two_cycles = bare([[{1: 1.0}], [{0: 1.0}], [{3: 1.0}], [{2: 1.0}]])
    assert sorted(map(sorted, (m.states for m in mec_decomposition(two_cycles)))) == [[0, 1], [2, 3]]
    chain = bare([[{1: 1.0}], [{2: 1.0}], [{3: 1.0}], [{2: 1.0}]])
    assert [m.states for m in mec_decomposition(chain)] == [{2, 3}]


def test_mec_classes():
    p = bare([[{1: 1.0}], [{0: 1.0}], [{2: 1.0}], [{3: 1.0}]],
             hits=[{0}, {1}, set(), {0}], f=2)
    mecs = mec_decomposition(p)
    assert dict(zip((min(m.states) for m in mecs), classify_mecs(mecs, p))) == {0: "AMEC", 2: "RMEC", 3: "NMEC"}


def brute_force_mecs(p):
    ecs = []
    for r in range(1, p.n + 1):
        for S in itertools.combinations(range(p.n), r):
            S = set(S)
            allowed = {x: [u for u in range(p.n_actions(x)) if set(map(int, p.succ[x][u])) <= S] for x in S}
            if any(not a for a in allowed.values()):
                continue
            g = nx.DiGraph()
            g.add_nodes_from(S)
            g.add_edges_from((x, int(y)) for x in S for u in allowed[x] for y in p.succ[x][u])
            if nx.is_strongly_connected(g):
                ecs.append(frozenset(S))
    return {s for s in ecs if not any(s < t for t in ecs)}


@st.composite
def small_products(draw):
    n = draw(st.integers(1, 8))
    succ = []
    for _ in range(n):
        acts = []
        for _ in range(draw(st.integers(1, 3))):
            targets = draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=3, unique=True))
            acts.append({t: 1.0 / len(targets) for t in targets})
        succ.append(acts)
    return bare(succ)


@settings(max_examples=80, deadline=None)
@given(small_products())
def test_mec_matches_brute_force(p):
    assert {m.states for m in mec_decomposition(p)} == brute_force_mecs(p)


# -- reachability and chains

def test_reach_examples():
    p = build_product(branch_mdp(), compile_ltl(GOAL_SAFE))
    assert max_reach_probability(p, [p.initial])[p.initial] == 1.0
    goal = [i for i, x in enumerate(p.states) if x != REJECT and x.s == 2]
    assert max_reach_probability(p, goal)[p.initial] == pytest.approx(0.7, abs=1e-12)
    iso = bare([[{0: 1.0}], [{1: 1.0}]])
    assert max_reach_probability(iso, [1])[0] == 0.0


def test_chain_class_examples():
    absorbing = bare([[{0: 1.0}]], hits=[{0}])
    assert chain_classes(absorbing, [0]).recurrent == [{0}]
    cycle = bare([[{1: 1.0}], [{0: 1.0}]])
    assert chain_classes(cycle, [0, 0]).recurrent == [{0, 1}]
    chain = bare([[{1: 1.0}], [{2: 1.0}], [{2: 1.0}]])
    mc = chain_classes(chain, [0, 0, 0])
    assert mc.transient == {0, 1} and mc.recurrent == [{2}]


# -- checks

def test_lemma1_single_set_is_vacuous():
    p = build_product(line_mdp(), compile_ltl(P_TASK))
    rng = np.random.default_rng(0)
    assert all(check_lemma1(p, random_policy(p, rng)).ok for _ in range(20))


def test_lemma1_frontier_disabled_counterexample():
    p = build_product(ballpass_abstraction(), compile_ltl(B1), frontier=False)
    # go to region 1 and stay there
    policy = []
    for x in p.states:
        policy.append(1 if x != REJECT and x.s == 1 else 0)
    res = check_lemma1(p, policy)
    assert not res.ok and res.witnesses


def test_lemma2_on_small_product():
    p = build_product(ballpass_abstraction(0.2), compile_ltl(B1))
    assert check_lemma2(p, RewardParams(), runs=500, length=50, seed=1).ok


def test_theorem1_deterministic_success():
    p = build_product(single_amec_mdp(), compile_ltl(GOAL_SAFE))
    res = check_theorem1(p)
    assert res.monotone
    assert res.rows[-1].U0 > 0.95


def test_theorem3_instances():
    for mdp, f in ((single_amec_mdp(), GOAL_SAFE), (branch_mdp(), GOAL_SAFE), (nmec_trap_mdp(), "GF r1 & GF r2")):
        res = check_theorem3(build_product(mdp, compile_ltl(f)), RewardParams())
        assert res.ok, res


def test_shaping_invariance_examples():
    a = compile_ltl(P_TASK)
    p = build_product(line_mdp(), a)
    assert check_shaping_invariance(p, a, RewardParams()).ok
    zero = check_shaping_invariance(p, a, RewardParams(), phi=lambda x, t: 0.0)
    assert zero.ok and zero.max_offset_error < 1e-9
    assert check_shaping_invariance(p, a, RewardParams(), phi=lambda x, t: 0.3).ok


def test_mc_agreement_small():
    p = build_product(ballpass_abstraction(0.2), compile_ltl(B1))
    res = check_mc_agreement(p, RewardParams(0.9, 0.99), runs=5000, seed=3)
    assert res.ok, res
    json.dumps(res.__dict__)
