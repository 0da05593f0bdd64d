"""Cue-driven consumption and the welfare value of three interventions.

Sweeps the cue strength across the flipping threshold, then compares a tax,
removing the cue and a commitment device under each declared criterion.
"""

import numpy as np

from neurowelfare.agent import final_choice_values, learner_from_config, simulate_learner
from neurowelfare.scenarios import build_addiction
from neurowelfare.welfare import classify_mistake_states, compare_interventions


def mistakes(kappa):
    b = build_addiction(kappa=kappa)
    learner = learner_from_config(b.mdp, b.agent_config, b.cue_model)
    _, st = simulate_learner(learner, b.mdp, 1, 500, np.random.default_rng(0))
    return classify_mistake_states(b.mdp, final_choice_values(learner, st), b.criterion("long-run"),
                                   b.dual_self, b.lambda_of_state).mistake_states


def main():
    b = build_addiction()
    print(f"threshold kappa* = {b.extra['kappa_star']}")
    for k in (0.0, 0.25, 0.45, 0.55, 1.0, 2.0):
        print(f"  kappa {k:4.2f}: mistake states {mistakes(k)}")

    cmp = compare_interventions(b.mdp, b.agent_config, b.cue_model, b.interventions, b.criteria, 1, 500,
                                np.random.default_rng(0), b.dual_self, b.lambda_of_state)
    print("\n" + cmp.to_csv())


if __name__ == "__main__":
    main()
