"""Two models with identical choices and opposite welfare verdicts.

Choice data alone cannot separate them; a prediction-error channel can,
and its power grows as the channel noise shrinks.
"""

import numpy as np

from neurowelfare.inference import identifiability_gap
from neurowelfare.scenarios import build_addiction, build_behavioral_twin


def main():
    b = build_addiction()
    iv = next(x for x in b.interventions if x.label == "cue-removal")
    for sigma in (10.0, 1.0, 0.3, 0.1):
        rep = identifiability_gap(b.mdp, build_behavioral_twin(b, sigma), horizon=3, neural_bins=3,
                                  intervention=iv, rng=np.random.default_rng(0), dual_self=b.dual_self,
                                  lambda_of_state=b.lambda_of_state)
        print(f"sigma {sigma:5.1f}: tv_choice {rep.tv_choice:.2e}  tv_joint {rep.tv_joint:.4f}")
    for label, d in rep.detail.items():
        print(f"  {label}: cue removal changes {d['criterion']} welfare by {d['delta']:+.3f}")


if __name__ == "__main__":
    main()
