"""An engagement-maximising platform against the user's long-run welfare."""

import numpy as np

from neurowelfare.scenarios import PlatformOptimizer, build_platform, run_platform_loop


def main():
    s = run_platform_loop(build_platform(), PlatformOptimizer(), np.random.default_rng(0))
    print("epoch engagement long-run  experienced")
    for i, e in enumerate(s.epochs):
        print(f"{e:5d} {s.engagement[i]:10.3f} {s.welfare['long-run'][i]:9.3f} {s.welfare['experienced'][i]:11.3f}")
    print(f"spent {s.spent} of {s.budget}")


if __name__ == "__main__":
    main()
