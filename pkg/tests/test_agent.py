import numpy as np
import pytest

from neurowelfare.agent import (AgentConfig, AgentState, CueModel, DualSelfUtility, Trajectory,
                                actor_update, critic_update, effective_values, implemented_utility,
                                learner_from_config, policy_probs, q_from_v, run_learning,
                                simulate_learner, td_error)
from neurowelfare.environment import (Mdp, chain_mdp, greedy_policy, solve_policy_values, uniform_policy,
                                      value_iteration)


def random_mdp(rng, S=4, A=2):
    P = rng.random((S, A, S))
    P /= P.sum(axis=2, keepdims=True)
    return Mdp(P, rng.normal(size=(S, A)), [False, True] + [False] * (S - 2), [False] * S, 0)


def test_td_error_examples():
    assert td_error(0, 0.9, 0, 0) == 0
    assert td_error(1, 0.9, 0.5, 0.2) == pytest.approx(1.25, abs=1e-15)
    assert td_error(0, 0.9, 0, 1.0) == -1.0


def test_critic_update_hand_value():
    mdp = chain_mdp(3)
    st = AgentState.initial(mdp)
    st.v[1] = 0.2
    out = critic_update(st, 1, 1.25, 0.1)
    assert out.v[1] == pytest.approx(0.325, abs=1e-15)
    assert out.visit_counts[1] == 1
    assert np.all(np.delete(out.v, 1) == np.delete(st.v, 1))
    same = critic_update(st, 1, 0.0, 0.1)
    assert np.array_equal(same.v, st.v) and same.visit_counts[1] == 1


def test_critic_updates_commute_with_summed_increment():
    mdp = chain_mdp(3)
    st = AgentState.initial(mdp)
    two = critic_update(critic_update(st, 0, 0.3, 0.1), 0, -0.7, 0.1)
    one = critic_update(st, 0, 0.3 - 0.7, 0.1)
    assert two.v[0] == pytest.approx(one.v[0], abs=1e-15)


def test_actor_update_hand_value():
    mdp = chain_mdp(3)
    st = AgentState.initial(mdp)
    out = actor_update(st, 0, 1, 2.0, 0.05)
    assert out.prefs[0, 1] == pytest.approx(0.1, abs=1e-15)
    assert actor_update(st, 0, 1, 0.0, 0.05).prefs.tolist() == st.prefs.tolist()
    down = actor_update(st, 0, 1, -1.0, 0.5)
    assert policy_probs(down.prefs[0], 1.0)[0] > policy_probs(st.prefs[0], 1.0)[0]


def test_q_from_v_examples():
    rng = np.random.default_rng(0)
    mdp = random_mdp(rng)
    np.testing.assert_array_equal(q_from_v(mdp, np.zeros(4), 0.9), mdp.reward)
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 1] = 1.0
    m = Mdp(P, np.zeros((2, 1)), [False] * 2, [False] * 2, 0)
    assert q_from_v(m, np.array([0.0, 1.0]), 0.5)[0, 0] == 0.5


def test_q_from_v_bellman_optimal():
    rng = np.random.default_rng(1)
    mdp = random_mdp(rng)
    Vstar = value_iteration(mdp, 0.8)
    Q = q_from_v(mdp, Vstar, 0.8)
    V = solve_policy_values(mdp, greedy_policy(Q, mdp), 0.8)
    np.testing.assert_allclose(q_from_v(mdp, V, 0.8).max(axis=1), V, atol=1e-9)


def test_policy_probs_examples():
    np.testing.assert_allclose(policy_probs([3.0, -1.0, 7.0], 0.0), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(policy_probs([1.0, 0.0], 1.0), [np.e / (np.e + 1), 1 / (np.e + 1)], atol=1e-12)
    assert abs(policy_probs([1.0, 0.0], 1.0)[0] - 0.73106) < 1e-5
    assert policy_probs([5.0, 0.0], 1000.0)[0] > 1 - 1e-12
    with pytest.raises(ValueError):
        policy_probs([1.0, 2.0], 1.0, [False, False])


def test_policy_probs_masked():
    p = policy_probs([10.0, 0.0, 0.0], 1.0, [False, True, True])
    assert p.tolist() == [0.0, 0.5, 0.5]


def test_effective_values_and_utility():
    c = np.array([[0.0, 0.0], [0.0, 0.3]])
    cue = CueModel(c, [0.0, 2.0])
    base = np.array([[0.1, 0.2], [0.0, 0.4]])
    assert effective_values(base, cue, 1)[1] == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(effective_values(base, cue, 0), base[0])
    cue2 = CueModel(c, [0.0, 4.0])
    d1 = effective_values(base, cue, 1) - base[1]
    d2 = effective_values(base, cue2, 1) - base[1]
    np.testing.assert_allclose(d2, 2 * d1, atol=1e-15)
    u = DualSelfUtility([2.0, 0.0], [10.0, 1.0])
    assert implemented_utility(0, 1.0, u) == 2.0
    assert implemented_utility(0, 0.0, u) == 10.0
    assert implemented_utility(0, 0.3, u) == pytest.approx(7.6, abs=1e-12)


def test_cue_model_rejects_negative_and_off_cue_kappa():
    with pytest.raises(ValueError):
        CueModel(np.zeros((2, 2)), [-1.0, 0.0])
    mdp = Mdp(np.full((2, 2, 2), 0.5), np.zeros((2, 2)), [False, True], [False, False], 0)
    assert CueModel(np.ones((2, 2)), [1.0, 1.0]).problems(mdp)
    assert not CueModel(np.ones((2, 2)), [0.0, 1.0]).problems(mdp)


def test_config_validation():
    for bad in ({"alpha_critic": 0.0}, {"beta": -1.0}, {"gamma": 1.0}, {"policy_mode": "x"},
                {"lr_schedule": "x"}, {"beta": float("inf")}):
        with pytest.raises(ValueError):
            AgentConfig(**bad)


def test_run_learning_trials_and_single_record():
    mdp = chain_mdp(3)
    with pytest.raises(ValueError):
        run_learning(mdp, AgentConfig(), trials=0, horizon=1, rng=np.random.default_rng(0))
    traj, _ = run_learning(mdp, AgentConfig(), trials=1, horizon=1, rng=np.random.default_rng(0))
    assert len(traj) == 1


def test_run_learning_deterministic():
    rng = np.random.default_rng(2)
    mdp = random_mdp(rng)
    a, _ = run_learning(mdp, AgentConfig(), trials=3, horizon=50, rng=np.random.default_rng(11))
    b, _ = run_learning(mdp, AgentConfig(), trials=3, horizon=50, rng=np.random.default_rng(11))
    assert a.to_csv() == b.to_csv()


def reference_run(mdp, cfg, cue, trials, horizon, rng):
    """Plain-Python actor-critic loop built from the pure operations."""
    st = AgentState.initial(mdp, cfg.initial_value)
    bonus = np.zeros(mdp.reward.shape) if cue is None else cue.bonus(mdp)
    log = []
    n = trials * horizon
    u_act, u_next = rng.random(n), rng.random(n)
    i = 0
    for k in range(trials):
        s = mdp.initial_state
        for t in range(horizon):
            if mdp.terminal_flags[s]:
                break
            if cfg.policy_mode == "q-from-v":
                vals = q_from_v(mdp, st.v, cfg.gamma)[s]
            else:
                vals = st.prefs[s].copy()
            vals = vals + bonus[s]
            p = policy_probs(vals, cfg.beta, mdp.available[s])
            a = int(np.searchsorted(np.cumsum(p), u_act[i], side="right"))
            a = min(a, len(p) - 1)
            s2 = int(np.searchsorted(np.cumsum(mdp.transition[s, a]), u_next[i], side="right"))
            r = mdp.reward[s, a]
            d = td_error(r, cfg.gamma, st.v[s2], st.v[s]) + bonus[s, a]
            log.append((k, t, s, a, r, d, st.v[s], p[a]))
            st = critic_update(st, s, d, cfg.alpha_critic)
            if cfg.policy_mode == "actor-preferences":
                st = actor_update(st, s, a, d, cfg.alpha_actor)
            s = s2
            i += 1
    return log, st


@pytest.mark.parametrize("mode", ["actor-preferences", "q-from-v"])
def test_compiled_loop_matches_reference(mode):
    rng = np.random.default_rng(3)
    mdp = random_mdp(rng)
    cue = CueModel(np.abs(rng.normal(size=(4, 2))), [0.0, 0.7, 0.0, 0.0])
    cfg = AgentConfig(alpha_critic=0.2, alpha_actor=0.3, beta=1.5, gamma=0.8, policy_mode=mode)
    traj, st = run_learning(mdp, cfg, cue, 2, 40, np.random.default_rng(5))
    ref, st_ref = reference_run(mdp, cfg, cue, 2, 40, np.random.default_rng(5))
    assert len(ref) == len(traj)
    np.testing.assert_allclose(np.array(traj.records, float), np.array(ref, float), atol=1e-12)
    np.testing.assert_allclose(st.v, st_ref.v, atol=1e-12)


def test_log_is_self_consistent():
    rng = np.random.default_rng(4)
    mdp = random_mdp(rng)
    traj, _ = run_learning(mdp, AgentConfig(alpha_critic=0.3), trials=1, horizon=300,
                           rng=np.random.default_rng(0))
    # replay the critic from the log alone
    v = np.zeros(mdp.n_states)
    for i in range(len(traj)):
        s, s2, r = traj.state[i], traj.next_state[i], traj.reward[i]
        assert traj.v_state[i] == v[s]
        d = td_error(r, 0.9, v[s2], v[s])
        assert traj.delta[i] == pytest.approx(d, abs=1e-12)
        v[s] += 0.3 * d


def test_baseline_cue_delta_excludes_bonus():
    rng = np.random.default_rng(5)
    mdp = random_mdp(rng)
    cue = CueModel(np.ones((4, 2)), [0.0, 1.0, 0.0, 0.0])
    traj, _ = run_learning(mdp, AgentConfig(cue_delta="baseline"), cue, 1, 200, np.random.default_rng(0))
    np.testing.assert_array_equal(traj.delta, traj.delta_experienced)
    traj2, _ = run_learning(mdp, AgentConfig(), cue, 1, 200, np.random.default_rng(0))
    at_cue = traj2.state == 1
    np.testing.assert_allclose(traj2.delta[at_cue] - traj2.delta_experienced[at_cue], 1.0, atol=1e-12)


def test_reward_acting_cue_enters_reward():
    rng = np.random.default_rng(6)
    mdp = random_mdp(rng)
    cue = CueModel(np.ones((4, 2)), [0.0, 0.5, 0.0, 0.0], acts_on="reward")
    learner = learner_from_config(mdp, AgentConfig(), cue)
    assert learner.rshift[1].tolist() == [0.5, 0.5]
    assert not learner.vshift.any()


def test_td_fixed_point_expectation_zero():
    rng = np.random.default_rng(8)
    mdp = random_mdp(rng)
    pi = uniform_policy(mdp)
    V = solve_policy_values(mdp, pi, 0.9)
    for s in range(mdp.n_states):
        exp_delta = sum(pi.probs[s, a] * (mdp.reward[s, a] + 0.9 * mdp.transition[s, a] @ V - V[s])
                        for a in range(mdp.n_actions))
        assert abs(exp_delta) < 1e-10


def test_trajectory_csv_header_and_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    mdp = random_mdp(rng)
    traj, _ = run_learning(mdp, AgentConfig(), trials=2, horizon=10, rng=np.random.default_rng(0))
    text = traj.to_csv(tmp_path / "t.csv")
    assert text.splitlines()[0] == "trial,t,state,action,reward,delta,v_state,chosen_prob"
    back = Trajectory.from_csv(tmp_path / "t.csv")
    assert back.records == traj.records
    inner = back.next_state >= 0
    np.testing.assert_array_equal(back.next_state[inner], traj.next_state[inner])


def test_decay_schedule_tau():
    mdp = chain_mdp(3)
    cfg = AgentConfig(alpha_critic=1.0, beta=0.0, lr_schedule="decay")
    traj, st = run_learning(mdp, cfg, trials=1, horizon=500, rng=np.random.default_rng(0))
    # with alpha 1 and 1/(1+n) steps, each state value is the running mean of its TD targets
    targets = {s: [] for s in range(3)}
    v = np.zeros(3)
    for i in range(len(traj)):
        s, s2 = traj.state[i], traj.next_state[i]
        targets[s].append(traj.reward[i] + 0.9 * v[s2])
        v[s] = np.mean(targets[s])
    np.testing.assert_allclose(st.v, v, atol=1e-12)
    with pytest.raises(ValueError):
        AgentConfig(lr_tau=0.0)


def test_simulate_learner_rejects_empty():
    mdp = chain_mdp(3)
    learner = learner_from_config(mdp, AgentConfig())
    with pytest.raises(ValueError):
        simulate_learner(learner, mdp, 1, 0, np.random.default_rng(0))
