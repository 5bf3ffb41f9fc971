"""Independent brute-force oracles shared by the tests."""

import itertools
import math

import numpy as np


def brute_oscillation(probs, rows, y, h, ustar, r, N, kind):
    """Expectation over every atom assignment and sign pattern, written out directly."""
    probs, rows, y = np.asarray(probs), np.asarray(rows, float), np.asarray(y, float)
    dists = [math.sqrt(sum(probs[a] * (u[a] - h[a]) ** 2 for a in range(len(probs)))) for u in rows]
    total = 0.0
    for atoms in itertools.product(range(len(probs)), repeat=N):
        w_atoms = math.prod(probs[a] for a in atoms)
        for signs in itertools.product((-1, 1), repeat=N):
            best = 0.0
            for u, d in zip(rows, dists):
                lam = 0.0 if d == 0 else min(1.0, r / d)
                acc = 0.0
                for a, e in zip(atoms, signs):
                    w = e if kind == "quadratic" else e * (ustar[a] - y[a])
                    acc += w * (u[a] - h[a])
                best = max(best, lam * abs(acc / N))
            total += w_atoms * best / 2 ** N
    return total
