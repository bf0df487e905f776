"""Independent Monte Carlo estimate of P(sup_{t<=T} |w(t)| >= c).

Plain numpy random walk with a two-sided Brownian-bridge crossing test;
shares no code with the package simulator. Used once to freeze the
reference value checked in tests/test_oracles.py.

    python scripts/oracle_brownian_sup.py --paths 1000000 --dt 1e-4
"""

import argparse
import math

import numpy as np


def estimate(c, T, paths, dt, seed, chunk=100_000):
    rng = np.random.default_rng(seed)
    steps = int(round(T / dt))
    sq = math.sqrt(dt)
    hits = 0
    for lo in range(0, paths, chunk):
        m = min(chunk, paths - lo)
        w = np.zeros(m)
        alive = np.ones(m, dtype=bool)
        for _ in range(steps):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            w0 = w[idx]
            w1 = w0 + sq * rng.standard_normal(idx.size)
            out = np.abs(w1) >= c
            p = np.exp(-2 * (c - w0) * (c - w1) / dt) + np.exp(-2 * (c + w0) * (c + w1) / dt)
            out |= rng.random(idx.size) < p
            w[idx] = w1
            alive[idx[out]] = False
        hits += int(np.sum(~alive))
    p = hits / paths
    return p, math.sqrt(p * (1 - p) / paths)


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--c", type=float, default=1.0)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--paths", type=int, default=1_000_000)
    ap.add_argument("--dt", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=20240501)
    a = ap.parse_args()
    p, se = estimate(a.c, a.T, a.paths, a.dt, a.seed)
    print(f"c={a.c} T={a.T} paths={a.paths} dt={a.dt}: p_hat={p!r} se={se!r}")
