"""Learning-agent tests.

Anchors worked out by hand:
  quantize((0.5, 0.0, 0.999, 0.2)) with 5 levels
      -> bins (2, 0, 4, 1) -> ((2*5 + 0)*5 + 4)*5 + 1 = 271
  epsilon schedule 0.9 halving: epoch 2 -> 0.225
  toy 2-state, 2-action MDP with s' = a and rewards [[1, 0], [2, 3]],
  gamma 0.9: Q* = [[25.3, 27.0], [26.3, 30.0]]
"""

import numpy as np
import pytest

from splitsim.agents import (
    AgentObservation,
    ExplorationSchedule,
    FixedSequenceAgent,
    FuzzyQLearningAgent,
    FuzzyRuleBase,
    FuzzySet,
    GreedyAgent,
    MembershipSpec,
    QLearningAgent,
    QTable,
    StaticAgent,
    firing_strengths,
    fql_select,
    fql_update,
    greedy_action,
    load_policies,
    ql_select,
    ql_update,
    quantize,
    save_policies,
)
from splitsim.power import OperativeMode


def test_quantize_anchor():
    obs = AgentObservation(h=0.5, b=0.0, l=0.999, rho=0.2)
    assert quantize(obs) == 271
    assert quantize(obs, coordinated=False) == 54   # 2*25 + 0*5 + 4


def test_quantize_edges_and_range():
    assert quantize(AgentObservation(1.0, 1.0, 1.0, 1.0)) == 624
    assert quantize(AgentObservation(0.0, 0.0, 0.0, 0.0)) == 0
    with pytest.raises(ValueError):
        quantize(AgentObservation(0.0, -0.1, 0.0, 0.0))
    with pytest.raises(ValueError):
        quantize(AgentObservation(0.0, 0.0, 1.1, 0.0))
    rng = np.random.default_rng(0)
    for _ in range(500):
        obs = AgentObservation(*rng.random(4))
        idx = quantize(obs)
        assert 0 <= idx < 625


def test_epsilon_schedule():
    sched = ExplorationSchedule(initial=0.9)
    assert sched.epsilon_at(0) == 0.9
    assert sched.epsilon_at(1) == 0.45
    assert sched.epsilon_at(2) == 0.225
    assert sched.epsilon_at(20) == 0.03    # floor
    assert ExplorationSchedule(initial=0.5, floor=0.05).epsilon_at(4) == 0.05
    with pytest.raises(ValueError):
        sched.epsilon_at(-1)
    with pytest.raises(ValueError):
        ExplorationSchedule(initial=1.5)


def test_default_membership_partition_of_unity():
    spec = MembershipSpec.default(4)
    spec.validate_partition()
    rng = np.random.default_rng(1)
    for _ in range(200):
        obs = AgentObservation(*rng.random(4))
        w = firing_strengths(obs, spec)
        assert w.shape == (625,)
        assert abs(w.sum() - 1.0) < 1e-9
        assert np.all(w >= 0.0)
        assert np.flatnonzero(w).size <= 16    # at most 2 live sets per dim


def test_crisp_membership_matches_quantizer():
    spec = MembershipSpec.crisp(4)
    spec.validate_partition()
    rng = np.random.default_rng(2)
    for _ in range(200):
        obs = AgentObservation(*rng.random(4))
        w = firing_strengths(obs, spec)
        nz = np.flatnonzero(w)
        assert nz.size == 1 and w[nz[0]] == 1.0
        assert nz[0] == quantize(obs)


def test_membership_hand_values():
    sets = MembershipSpec.default(1).dims[0]
    # x = 0.1 sits between the low shoulder and the first triangle
    assert abs(sets[0].membership(0.1) - 0.6) < 1e-12
    assert abs(sets[1].membership(0.1) - 0.4) < 1e-12
    assert sets[0].membership(0.0) == 1.0
    assert sets[1].membership(0.25) == 1.0
    assert sets[4].membership(1.0) == 1.0
    assert sets[4].membership(0.75) == 0.0


def test_broken_partition_rejected():
    bad = MembershipSpec(dims=(
        (FuzzySet("trapezoid", (0.0, 0.0, 0.5, 1.0)),
         FuzzySet("trapezoid", (0.0, 0.5, 1.0, 1.0))),
    ))
    with pytest.raises(ValueError):
        bad.validate_partition()


def test_fql_select_blend_rounding():
    spec = MembershipSpec.crisp(1)
    rb = FuzzyRuleBase(membership=spec)
    rng = np.random.default_rng(0)
    # two rules firing equally, greedy picks 0 and 2: blend 1.0 -> action 1
    rb.values[0] = [10.0, 0.0, 0.0]
    rb.values[1] = [0.0, 0.0, 10.0]
    strengths = np.array([0.5, 0.5, 0.0, 0.0, 0.0])
    assert fql_select(rb, strengths, 0.0, rng) == 1
    # greedy picks 1 and 2: blend 1.5 rounds away from zero -> 2
    rb.values[0] = [0.0, 10.0, 0.0]
    assert fql_select(rb, strengths, 0.0, rng) == 2


def test_fql_update_spreads_td_error():
    spec = MembershipSpec.crisp(1)
    rb = FuzzyRuleBase(membership=spec, alpha=0.5, gamma=0.9)
    rng = np.random.default_rng(0)
    rb.values[0] = [10.0, 0.0, 0.0]
    rb.values[1] = [0.0, 0.0, 6.0]
    strengths = np.array([0.25, 0.75, 0.0, 0.0, 0.0])
    a = fql_select(rb, strengths, 0.0, rng)
    assert a == 2   # blend (0.25*0 + 0.75*2) = 1.5 -> 2
    # q_x = 0.25*10 + 0.75*6 = 7; next state all-zero rule -> v' = 0
    nxt = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    fql_update(rb, 1.0, nxt)
    delta = 1.0 - 7.0
    assert abs(rb.values[0, 0] - (10.0 + 0.5 * delta * 0.25)) < 1e-12
    assert abs(rb.values[1, 2] - (6.0 + 0.5 * delta * 0.75)) < 1e-12
    # untouched entries stay put
    assert rb.values[0, 1] == 0.0 and rb.values[4, 0] == 0.0


def test_fql_update_without_select_raises():
    rb = FuzzyRuleBase(membership=MembershipSpec.crisp(1))
    with pytest.raises(RuntimeError):
        fql_update(rb, 0.5, np.ones(5) / 5)
    rng = np.random.default_rng(0)
    fql_select(rb, np.array([1.0, 0, 0, 0, 0]), 0.0, rng)
    fql_update(rb, 0.5, np.array([1.0, 0, 0, 0, 0]))
    with pytest.raises(RuntimeError):   # cache consumed
        fql_update(rb, 0.5, np.array([1.0, 0, 0, 0, 0]))


def test_crisp_fuzzy_equals_tabular_trajectory():
    """With indicator memberships the fuzzy learner must reproduce the
    tabular learner exactly, choices and table contents both."""
    rng_env = np.random.default_rng(7)
    ql = QLearningAgent(alpha=0.3, gamma=0.9, epsilon=0.2,
                        rng=np.random.default_rng(42))
    fq = FuzzyQLearningAgent(alpha=0.3, gamma=0.9, epsilon=0.2,
                             rng=np.random.default_rng(42),
                             membership=MembershipSpec.crisp(4))
    ql.begin_episode()
    fq.begin_episode()
    prev = None
    for _ in range(1000):
        obs = AgentObservation(*rng_env.random(4))
        if prev is not None:
            r = float(rng_env.random())
            ql.observe(r, obs)
            fq.observe(r, obs)
        assert ql.act(obs) == fq.act(obs)
        prev = obs
    ql.observe(0.5, None)
    fq.observe(0.5, None)
    assert np.array_equal(ql.table.values, fq.rulebase.values)
    assert ql.table.values.any()   # learning actually happened


def test_toy_mdp_fixed_point():
    rewards = [[1.0, 0.0], [2.0, 3.0]]
    table = QTable(n_states=2, n_actions=2, alpha=0.5, gamma=0.9)
    for _ in range(2000):
        for s in (0, 1):
            for a in (0, 1):
                ql_update(table, s, a, rewards[s][a], a)
    expected = np.array([[25.3, 27.0], [26.3, 30.0]])
    assert np.allclose(table.values, expected, atol=1e-6)
    rng = np.random.default_rng(0)
    assert ql_select(table, 0, 0.0, rng) == 1
    assert ql_select(table, 1, 0.0, rng) == 1


def test_epsilon_greedy_tiebreak_covers_all_actions():
    table = QTable(n_states=1, n_actions=3)
    rng = np.random.default_rng(3)
    picks = {ql_select(table, 0, 0.0, rng) for _ in range(60)}
    assert picks == {0, 1, 2}
    table.values[0] = [0.0, 5.0, 0.0]
    assert all(ql_select(table, 0, 0.0, rng) == 1 for _ in range(20))


def test_exploration_uses_uniform_actions():
    table = QTable(n_states=1, n_actions=3)
    table.values[0] = [0.0, 100.0, 0.0]
    rng = np.random.default_rng(4)
    picks = {ql_select(table, 0, 1.0, rng) for _ in range(60)}
    assert picks == {0, 1, 2}


def test_greedy_threshold_is_strict():
    phy = OperativeMode.PHY_RF.value
    off = OperativeMode.OFF.value
    assert greedy_action(AgentObservation(0, 0.2, 0, 0)) == off
    assert greedy_action(AgentObservation(0, 0.2 + 1e-9, 0, 0)) == phy
    assert greedy_action(AgentObservation(0, 1.0, 0, 0)) == phy
    assert greedy_action(AgentObservation(0, 0.5, 0, 0), threshold_frac=0.6) == off
    agent = GreedyAgent()
    assert agent.act(AgentObservation(0, 0.05, 0, 0)) == off


def test_static_and_sequence_agents():
    st = StaticAgent(OperativeMode.MAC_PHY.value)
    obs = AgentObservation(0.5, 0.5, 0.5, 0.5)
    assert st.act(obs) == 2 and st.act(obs) == 2
    seq = FixedSequenceAgent([0, 1, 2])
    seq.begin_episode()
    assert [seq.act(obs) for _ in range(3)] == [0, 1, 2]
    seq.begin_episode()
    assert seq.act(obs) == 0


def test_observe_protocol_errors():
    obs = AgentObservation(0.5, 0.5, 0.5, 0.5)
    agent = QLearningAgent(rng=np.random.default_rng(0))
    agent.begin_episode()
    with pytest.raises(RuntimeError):
        agent.observe(0.5, obs)
    agent.act(obs)
    agent.observe(0.5, obs)
    with pytest.raises(RuntimeError):
        agent.observe(0.5, obs)
    fq = FuzzyQLearningAgent(rng=np.random.default_rng(0))
    fq.begin_episode()
    with pytest.raises(RuntimeError):
        fq.observe(0.5, obs)


def test_learning_flag_freezes_tables():
    obs1 = AgentObservation(0.1, 0.9, 0.3, 0.0)
    obs2 = AgentObservation(0.2, 0.8, 0.4, 0.1)
    for agent in (QLearningAgent(epsilon=0.5, rng=np.random.default_rng(1)),
                  FuzzyQLearningAgent(epsilon=0.5, rng=np.random.default_rng(1))):
        agent.learning = False
        agent.begin_episode()
        agent.act(obs1)
        agent.observe(0.7, obs2)
        agent.act(obs2)
        agent.observe(0.7, None)
        values = agent.table.values if hasattr(agent, "table") else agent.rulebase.values
        assert not values.any()


def test_epsilon_schedule_by_slot():
    agent = QLearningAgent(rng=np.random.default_rng(0))
    agent.epsilon_schedule = lambda slot: 0.5 if slot < 2 else 0.125
    agent.begin_episode()
    obs = AgentObservation(0.5, 0.5, 0.5, 0.5)
    agent.act(obs)
    assert agent.epsilon == 0.5
    agent.observe(0.1, obs)
    agent.act(obs)
    assert agent.epsilon == 0.5
    agent.observe(0.1, obs)
    agent.act(obs)
    assert agent.epsilon == 0.125
    agent.observe(0.1, None)
    agent.begin_episode()    # slot counter winds back
    agent.act(obs)
    assert agent.epsilon == 0.5


def test_action_weighted_value_variant():
    spec = MembershipSpec.crisp(1)
    rb = FuzzyRuleBase(membership=spec, action_weighted_q=True)
    rb.values[0] = [5.0, 1.0, 1.0]
    # argmax is action 0, so the action-index weight zeroes the blend
    assert rb.state_value([(0, 1.0)]) == 0.0
    std = FuzzyRuleBase(membership=spec)
    std.values[0] = [5.0, 1.0, 1.0]
    assert std.state_value([(0, 1.0)]) == 5.0


def test_membership_dims_must_match_coordination():
    with pytest.raises(ValueError):
        FuzzyQLearningAgent(coordinated=True, membership=MembershipSpec.crisp(3))
    with pytest.raises(ValueError):
        FuzzyQLearningAgent(coordinated=False, membership=MembershipSpec.default(4))


def test_policy_roundtrip_bit_exact(tmp_path):
    rng_env = np.random.default_rng(11)
    ql = QLearningAgent(alpha=0.2, gamma=0.85, epsilon=0.3,
                        rng=np.random.default_rng(1))
    fq = FuzzyQLearningAgent(coordinated=False, alpha=0.4, gamma=0.7,
                             epsilon=0.3, rng=np.random.default_rng(2))
    for agent in (ql, fq):
        agent.begin_episode()
        prev = None
        for _ in range(300):
            obs = AgentObservation(*rng_env.random(4))
            if prev is not None:
                agent.observe(float(rng_env.random()), obs)
            agent.act(obs)
            prev = obs
        agent.observe(0.2, None)

    path = tmp_path / "policies.json"
    saved = [ql, fq, GreedyAgent(threshold_frac=0.25),
             StaticAgent(OperativeMode.OFF.value)]
    save_policies(saved, path)
    loaded = load_policies(path, rngs=[np.random.default_rng(k) for k in range(4)])

    assert np.array_equal(loaded[0].table.values, ql.table.values)
    assert loaded[0].table.alpha == 0.2 and loaded[0].table.gamma == 0.85
    assert np.array_equal(loaded[1].rulebase.values, fq.rulebase.values)
    assert loaded[1].coordinated is False
    assert loaded[1].rulebase.membership == fq.rulebase.membership
    assert loaded[2].threshold_frac == 0.25
    assert loaded[3].mode == OperativeMode.OFF.value


def test_policy_file_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "other", "version": 1, "agents": []}\n')
    with pytest.raises(ValueError):
        load_policies(path)
    path.write_text('{"format": "splitsim-policy", "version": 99, "agents": []}\n')
    with pytest.raises(ValueError):
        load_policies(path)
    good = tmp_path / "good.json"
    save_policies([GreedyAgent()], good)
    with pytest.raises(ValueError):
        load_policies(good, rngs=[None, None])
