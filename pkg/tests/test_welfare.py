import json

import numpy as np
import pytest

from neurowelfare.agent import DualSelfUtility, final_choice_values, learner_from_config, simulate_learner
from neurowelfare.environment import (Intervention, Mdp, apply_intervention, StochasticPolicy, uniform_policy,
                                      value_iteration)
from neurowelfare.scenarios import build_addiction
from neurowelfare.welfare import (COMPARISON_HEADER, InterventionComparison, WelfareCriterion,
                                  classify_mistake_states, compare_interventions, criterion_action_values,
                                  criterion_utility, evaluate_welfare)


def crit(kind="long-run", gamma_w=0.9, **kw):
    return WelfareCriterion(kind, "declared standard", "declared reason", gamma_w, **kw)


def self_loop():
    return Mdp(np.ones((1, 2, 1)), [[1.0, 0.0]], [False], [False], 0)


def random_mdp(rng, S=4, A=3):
    P = rng.random((S, A, S))
    P /= P.sum(axis=2, keepdims=True)
    return Mdp(P, rng.normal(size=(S, A)), rng.random(S) < 0.5, [False] * S, 0)


def test_empty_declarations_rejected():
    for c, j in (("", "why"), ("what", ""), ("   ", "why"), (None, "why")):
        with pytest.raises(ValueError):
            WelfareCriterion("long-run", c, j)
    with pytest.raises(ValueError):
        WelfareCriterion("custom", "a", "b")
    with pytest.raises(ValueError):
        WelfareCriterion("other", "a", "b")


def test_criterion_utility_examples():
    mdp = self_loop()
    u = DualSelfUtility([2.0, 0.0], [10.0, 1.0])
    imp = criterion_utility(crit("implemented"), u, [0.3], mdp)
    assert imp[0, 0] == pytest.approx(7.6, abs=1e-12)
    np.testing.assert_array_equal(criterion_utility(crit("experienced"), None, None, mdp), mdp.reward)
    np.testing.assert_array_equal(criterion_utility(crit("long-run"), u, None, mdp)[0], [2.0, 0.0])


def test_dual_self_boundaries_bit_exact():
    rng = np.random.default_rng(0)
    mdp = random_mdp(rng)
    u = DualSelfUtility(rng.normal(size=3), rng.normal(size=3))
    one = criterion_utility(crit("implemented"), u, np.ones(4), mdp)
    zero = criterion_utility(crit("implemented"), u, np.zeros(4), mdp)
    assert np.array_equal(one, np.tile(u.u_long, (4, 1)))
    assert np.array_equal(zero, np.tile(u.u_short, (4, 1)))


def test_self_loop_welfare():
    mdp = self_loop()
    pi = StochasticPolicy([[1.0, 0.0]])
    assert evaluate_welfare(mdp, pi, crit("experienced", 0.5)) == pytest.approx(2.0, abs=1e-12)
    assert evaluate_welfare(mdp, pi, crit("experienced", 0.9)) == pytest.approx(10.0, abs=1e-10)


def test_welfare_linear_in_utility():
    rng = np.random.default_rng(1)
    mdp = random_mdp(rng)
    pi = StochasticPolicy(rng.dirichlet(np.ones(3), size=4))
    U1, U2 = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    c = crit("custom", table=U1)
    w = lambda U: evaluate_welfare(mdp, pi, c, utility=U)
    assert w(2.0 * U1 - 3.0 * U2) == pytest.approx(2.0 * w(U1) - 3.0 * w(U2), abs=1e-10)


def test_welfare_against_monte_carlo():
    rng = np.random.default_rng(2)
    mdp = random_mdp(rng, S=3, A=2)
    pi = StochasticPolicy(rng.dirichlet(np.ones(2), size=3))
    c = crit("experienced", 0.7)
    exact = evaluate_welfare(mdp, pi, c)
    # truncated rollouts; 0.7**60 is negligible
    total = 0.0
    n = 4000
    for _ in range(n):
        s, disc = 0, 1.0
        for _ in range(60):
            a = rng.choice(2, p=pi.probs[s])
            total += disc * mdp.reward[s, a]
            s = rng.choice(3, p=mdp.transition[s, a])
            disc *= 0.7
    assert total / n == pytest.approx(exact, abs=0.1)


def test_optimal_continuation_matches_value_iteration():
    rng = np.random.default_rng(3)
    mdp = random_mdp(rng)
    c = crit("experienced", 0.8)
    Q = criterion_action_values(mdp, c, continuation="optimal")
    np.testing.assert_allclose(Q.max(axis=1), value_iteration(mdp, 0.8), atol=1e-8)


def test_mistakes_invariant_to_constant_shift():
    rng = np.random.default_rng(4)
    mdp = random_mdp(rng)
    Qi = rng.normal(size=(4, 3))
    c = crit("experienced")
    a = classify_mistake_states(mdp, Qi, c)
    b = classify_mistake_states(mdp, Qi + 17.0, c)
    assert a.mistake_states == b.mistake_states


def test_criterion_values_are_never_mistakes():
    rng = np.random.default_rng(5)
    mdp = random_mdp(rng)
    c = crit("experienced", 0.8)
    Q = criterion_action_values(mdp, c, continuation="optimal")
    assert classify_mistake_states(mdp, Q, c, continuation="optimal").mistake_states == []


def test_mistake_threshold_in_addiction_scenario():
    assert classify_addiction(0.0) == []
    assert classify_addiction(None) == [1]


def classify_addiction(kappa):
    b = build_addiction(kappa=kappa)
    learner = learner_from_config(b.mdp, b.agent_config, b.cue_model)
    _, st = simulate_learner(learner, b.mdp, 1, 500, np.random.default_rng(0))
    return classify_mistake_states(b.mdp, final_choice_values(learner, st), b.criterion("long-run"),
                                   b.dual_self, b.lambda_of_state).mistake_states


def test_null_intervention_zero_delta():
    b = build_addiction()
    null = Intervention("reward-shift", [0], [0], 0.0, label="null")
    cmp = compare_interventions(b.mdp, b.agent_config, b.cue_model, [null], b.criteria, 1, 300,
                                np.random.default_rng(0), b.dual_self, b.lambda_of_state)
    for c in b.criteria:
        assert cmp.delta("null", c.label) == 0.0


def test_comparison_csv_header_and_dict():
    b = build_addiction()
    cmp = compare_interventions(b.mdp, b.agent_config, b.cue_model, b.interventions, b.criteria, 1, 300,
                                np.random.default_rng(1), b.dual_self, b.lambda_of_state)
    lines = cmp.to_csv().splitlines()
    assert lines[0] == ",".join(COMPARISON_HEADER) == "intervention,criterion,before,after,delta"
    assert len(lines) == 1 + len(b.interventions) * len(b.criteria)
    d = json.loads(json.dumps(cmp.to_dict()))
    assert len(d["rows"]) == len(cmp.rows)
    with pytest.raises(KeyError):
        InterventionComparison().delta("x", "y")


def test_uniform_policy_on_restricted_mdp_is_valid():
    b = build_addiction()
    m = apply_intervention(b.mdp, next(iv for iv in b.interventions if iv.kind == "action-restriction"))
    w = evaluate_welfare(m, uniform_policy(m), b.criterion("long-run"), b.dual_self, b.lambda_of_state)
    assert np.isfinite(w)


def test_criterion_dict_round_trip():
    c = crit("custom", table=np.eye(2), label="mine")
    back = WelfareCriterion.from_dict(json.loads(json.dumps(c.to_dict())))
    assert back.to_dict() == c.to_dict()
