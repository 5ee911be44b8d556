"""Shared instance generators for the test suite."""

from __future__ import annotations

import numpy as np

from balmatch.basis import BasisSpec, expand
from balmatch.data import Dataset
from balmatch.solver import BalanceSpec


def tiny_instance(rng: np.random.Generator, max_arm: int = 6):
    """Random small problem; some rows are exact duplicates (same z, x and y)."""
    T = int(rng.integers(1, max_arm + 1))
    C = int(rng.integers(1, max_arm + 1))
    d = int(rng.integers(1, 3))
    x = np.round(rng.uniform(size=(T + C, d)), 3)
    z = np.r_[np.ones(T, dtype=int), np.zeros(C, dtype=int)]
    y = np.round(rng.normal(size=T + C) + z, 3)
    n_dup = int(rng.integers(0, 3))
    for _ in range(n_dup):
        i, j = rng.integers(0, T + C, size=2)
        if z[i] == z[j] and i != j:
            x[j], y[j] = x[i], y[i]
    ds = Dataset.from_arrays(z, y, x)
    spec = BasisSpec("polynomial", degree=2) if d == 1 and rng.uniform() < 0.5 else BasisSpec("raw")
    bm = expand(ds, spec)
    sd = bm.values.std(axis=0)
    delta = BalanceSpec(np.maximum(sd, 0.05) * rng.uniform(0.3, 1.0))
    return ds, bm, delta


def identical_arms():
    """Two treated at x = 0, 1 and two controls at the same points."""
    return Dataset.from_arrays([1, 1, 0, 0], [1.0, 3.0, 0.0, 0.0], [[0.0], [1.0], [0.0], [1.0]])


def random_counts(rng: np.random.Generator, with_replacement: bool = True):
    """A valid (counts, S, M) triple for the greedy realization."""
    S = int(rng.integers(1, 9))
    if with_replacement:
        C = int(rng.integers(1, 12))
        M = int(rng.integers(1, C + 1))
        cap = S
    else:
        M = int(rng.integers(1, 4))
        C = S * M + int(rng.integers(0, 5))
        cap = 1
    counts = np.zeros(C, dtype=int)
    for _ in range(M * S):
        open_ = np.flatnonzero(counts < cap)
        counts[rng.choice(open_)] += 1
    return counts, S, M
