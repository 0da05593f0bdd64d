"""Prediction errors migrate from reward to cue over Pavlovian training.

Prints peri-event TD errors early and late in training, then shows how the
late cue response scales with the cue-to-reward delay.
"""

import numpy as np

from neurowelfare.neural import ConditioningProtocol, simulate_conditioning
from neurowelfare.scenarios import CONDITIONING_CONFIG


def main():
    _, s = simulate_conditioning(ConditioningProtocol(trials=500), CONDITIONING_CONFIG,
                                 np.random.default_rng(0))
    print("phase   cue      reward   omission")
    for phase in ("early", "late"):
        print(f"{phase:6s} {s[phase + '.cue']:8.4f} {s[phase + '.reward']:8.4f} {s[phase + '.omission']:8.4f}")

    print("\nlate cue response by delay (fixed point is gamma**delay)")
    g = CONDITIONING_CONFIG.gamma
    for delay in (1, 2, 3, 4):
        proto = ConditioningProtocol(cue_time=1, reward_time=1 + delay, trials=500)
        _, s = simulate_conditioning(proto, CONDITIONING_CONFIG, np.random.default_rng(0))
        print(f"  delay {delay}: {s['late.cue']:.4f}  vs {g**delay:.4f}")


if __name__ == "__main__":
    main()
