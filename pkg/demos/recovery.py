"""Parameter recovery on a two-armed bandit across data set sizes."""

import numpy as np

from neurowelfare.inference import FitSearch, ModelSpec, parameter_recovery
from neurowelfare.scenarios import bandit_mdp


def main():
    spec = ModelSpec("plain-rl", {"alpha": (0.01, 0.5), "beta": (0.1, 10.0)}, {"gamma": 0.9})
    truth = {"alpha": 0.1, "beta": 2.0}
    for episodes in (25, 50, 100, 200):
        rec = parameter_recovery(spec, truth, bandit_mdp(), 10, episodes, 50, FitSearch(5, 1, 1e-4, 300),
                                 np.random.default_rng(0))
        print(f"{episodes:4d} episodes: median |err| alpha {rec['alpha'].median_abs_error:.4f}, "
              f"beta {rec['beta'].median_abs_error:.4f}; within 20%: {rec['beta'].coverage_20:.2f}")


if __name__ == "__main__":
    main()
