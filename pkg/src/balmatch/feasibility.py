"""Sufficient-condition diagnostics for the existence of a balanced matching.

rho is the smallest probability that a control unit's basis vector falls in
one of 3^K axis-aligned boxes centered at

    mean_treated(B) + (3/2) * delta * b,   b in {-1, 0, 1}^K,

and it drives the sample-size bound n >= log_{1-rho}(delta0 * 2^-K).
These are reports only; the solver decides feasibility.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

MAX_EXACT_K = 12


def box_centers(treated_mean, delta) -> np.ndarray:
    """All 3^K centers, rows ordered lexicographically in b."""
    treated_mean = np.asarray(treated_mean, dtype=float)
    delta = np.asarray(delta, dtype=float)
    b = np.array(list(itertools.product((-1, 0, 1), repeat=len(delta))), dtype=float)
    return treated_mean[None, :] + 1.5 * delta[None, :] * b


@dataclass(frozen=True)
class RhoEstimate:
    rho: float
    se: float
    n_boxes: int
    boxes_evaluated: int
    exact_enumeration: bool
    treated_mean: list
    box_side: list
    n_control: int
    vacuous: bool

    @property
    def coverage(self) -> float:
        return self.boxes_evaluated / self.n_boxes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coverage"] = self.coverage
        return d


def _memberships(Bc: np.ndarray, mean: np.ndarray, delta: np.ndarray, side: np.ndarray):
    # (C, K, 3): is B_k of each control inside the interval for b_k = -1, 0, 1
    offsets = 1.5 * delta[:, None] * np.array([-1.0, 0.0, 1.0])[None, :]
    centers = mean[:, None] + offsets
    return np.abs(Bc[:, :, None] - centers[None, :, :]) <= side[None, :, None] / 2


def rho_boxes(treated_B, control_B, delta, box_side=None, mc_boxes: int = 20_000,
              seed: int = 0) -> RhoEstimate:
    """Estimate rho from treated and control basis samples.

    The treated-arm mean comes from the sample; each box probability is the
    fraction of control rows inside it. For K <= 12 every box is counted;
    beyond that a random subset of boxes is checked (``coverage`` < 1, and
    the reported minimum is then an upper bound).
    """
    Bt = np.atleast_2d(np.asarray(treated_B, dtype=float))
    Bc = np.atleast_2d(np.asarray(control_B, dtype=float))
    delta = np.asarray(getattr(delta, "delta", delta), dtype=float)
    if not np.all(np.isfinite(delta)):
        raise ValueError("box construction needs finite tolerances")
    K = len(delta)
    side = delta.copy() if box_side is None else np.broadcast_to(
        np.asarray(box_side, dtype=float), (K,)).copy()
    mean = Bt.mean(axis=0)
    C = len(Bc)
    mem = _memberships(Bc, mean, delta, side)
    n_boxes = 3 ** K
    if K <= MAX_EXACT_K:
        inside = mem.any(axis=2).all(axis=1)
        counts = Counter()
        for row in mem[inside]:
            options = [np.flatnonzero(row[k]) for k in range(K)]
            counts.update(itertools.product(*map(tuple, options)))
        min_count = 0 if len(counts) < n_boxes else min(counts.values())
        evaluated, exact = n_boxes, True
    else:
        rng = np.random.default_rng(seed)
        codes = rng.integers(0, 3, size=(mc_boxes, K))
        min_count = C
        for code in codes:
            hit = mem[:, np.arange(K), code].all(axis=1).sum()
            min_count = min(min_count, int(hit))
        evaluated, exact = len({tuple(c) for c in codes.tolist()}), False
    rho = min_count / C
    se = math.sqrt(rho * (1 - rho) / C)
    return RhoEstimate(rho, se, n_boxes, evaluated, exact, mean.tolist(), side.tolist(), C,
                       rho == 0.0)


def rho_from_sample(bm, arms, delta, box_side=None, **kw) -> RhoEstimate:
    arms = np.asarray(arms)
    return rho_boxes(bm.values[arms == 1], bm.values[arms == 0], delta, box_side, **kw)


def rho_from_dgp(dgp, basis_spec, delta, box_side=None, draws: int = 200_000,
                 seed: int = 0) -> RhoEstimate:
    """rho for a known DGP from a large simulated sample of both arms."""
    from .basis import expand

    rng = np.random.default_rng(seed)
    x = dgp.sample_x(rng, draws)
    z = rng.uniform(size=draws) < dgp.propensity(x)
    B = expand(x, basis_spec).values
    return rho_boxes(B[z], B[~z], delta, box_side, seed=seed)


class NoFiniteBound(ValueError):
    pass


def sample_size_bound(rho: float, delta0: float, K: int) -> int:
    """ceil(log_{1-rho}(delta0 * 2^-K))."""
    if not 0 < delta0 < 1:
        raise ValueError("delta0 must lie in (0, 1)")
    if K < 1:
        raise ValueError("K must be >= 1")
    if not 0 < rho < 1:
        raise NoFiniteBound(f"no finite sample-size bound for rho={rho}")
    value = (math.log(delta0) - K * math.log(2)) / math.log1p(-rho)
    return math.ceil(value - 1e-12)


@dataclass(frozen=True)
class OverlapReport:
    margin: float
    threshold: float
    passed: bool
    c_const: float
    r_pi: float
    K: int
    n: int
    note: str = ("heuristic: the order constant of the overlap condition is unspecified "
                 "and supplied by the user")

    def to_dict(self) -> dict:
        return asdict(self)


def overlap_report(pi_values, K: int, n: int, r_pi: float = 2.0, c_const: float = 1.0) -> OverlapReport:
    """Compare min(pi, 1 - pi) with c / (log K + n K^-r_pi)."""
    pi = np.asarray(pi_values, dtype=float)
    if np.any((pi <= 0) | (pi >= 1)):
        raise ValueError("propensity values must lie strictly inside (0, 1)")
    margin = float(np.min(np.minimum(pi, 1 - pi)))
    threshold = c_const / (math.log(K) + n * K ** (-r_pi))
    return OverlapReport(margin, threshold, margin >= threshold and margin > 0, c_const, r_pi, K, n)


@dataclass
class FeasibilityReport:
    rho: RhoEstimate | None
    delta0: float
    K: int
    n_actual: int | None
    n_min: int | None
    overlap: OverlapReport | None = None
    verdicts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rho": None if self.rho is None else self.rho.to_dict(),
            "delta0": self.delta0,
            "K": self.K,
            "n_actual": self.n_actual,
            "n_min": self.n_min,
            "overlap": None if self.overlap is None else self.overlap.to_dict(),
            "verdicts": self.verdicts,
        }


def feasibility_report(rho: float | RhoEstimate, delta0: float, K: int, n_actual: int | None = None,
                       overlap: OverlapReport | None = None) -> FeasibilityReport:
    est = rho if isinstance(rho, RhoEstimate) else None
    value = est.rho if est is not None else float(rho)
    verdicts: dict = {"vacuous_rho": value <= 0.0}
    try:
        n_min = sample_size_bound(value, delta0, K)
    except NoFiniteBound:
        n_min = None
        verdicts["no_finite_bound"] = True
    if n_min is not None and n_actual is not None:
        verdicts["sample_size_ok"] = n_actual >= n_min
    if overlap is not None:
        verdicts["overlap_ok"] = overlap.passed
    rep = FeasibilityReport(est, delta0, K, n_actual, n_min, overlap, verdicts)
    if est is None:
        rep.verdicts["rho_value"] = value
    return rep
