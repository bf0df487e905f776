"""Strong-error regression slopes of Euler-Maruyama on dy = -y dt + mu G dw.

Additive noise (G = 1) gives slope ~1, since Euler coincides with Milstein
there; multiplicative noise (G = y) gives the generic ~1/2.

    python scripts/strong_order_study.py --paths 2000
"""

import argparse

from noisestab.core import NoiseClass
from noisestab.simulate import strong_error_study
from noisestab.systems import constant_noise, linear_system, noise_from_expressions

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    dts = [2.0**-k for k in range(4, 11)]
    cases = {
        "additive G=1, mu=0.1": (constant_noise(1), 0.1),
        "multiplicative G=y, mu=1": (noise_from_expressions([["y1"]], NoiseClass.bounded(1.0)), 1.0),
    }
    for name, (noise, mu) in cases.items():
        r = strong_error_study(linear_system(1.0), noise, mu, [1.0], 1.0, dts, n_paths=a.paths, seed=a.seed)
        errs = " ".join(f"{e:.3e}" for e in r.errors)
        print(f"{name}: slope={r.slope:.3f} errors=[{errs}]")
