"""Difference-in-means effect estimates after matching, with a plug-in variance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .basis import BasisMatrix
from .data import Dataset
from .solver import MatchSolution
from .weights import ImpliedWeights, implied_weights

RIDGE_PENALTY = 1e-8
ATT_CAVEAT = "ATT is reported as a point estimate only; no variance is computed for it"


def _matched_means(sol: MatchSolution, y: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(sol.sources, dtype=np.int64)
    t = np.asarray(sol.targets, dtype=np.int64)
    total = np.bincount(s, weights=y[t], minlength=n)
    count = np.bincount(s, minlength=n)
    return total, count


def ate_matched(ds: Dataset, sols) -> float:
    """Each unit's outcome against the mean outcome of its matches, averaged over n."""
    t2c, c2t = sols
    n = ds.n
    total_t, count_t = _matched_means(t2c, ds.y, n)
    total_c, count_c = _matched_means(c2t, ds.y, n)
    treated, control = ds.z == 1, ds.z == 0
    assert np.all(count_t[treated] > 0) and np.all(count_c[control] > 0), "unit without matches"
    term_t = ds.y[treated] - total_t[treated] / count_t[treated]
    term_c = total_c[control] / count_c[control] - ds.y[control]
    return float((term_t.sum() + term_c.sum()) / n)


def ate_weighted(ds: Dataset, w: ImpliedWeights) -> float:
    if not w.both_directions:
        raise ValueError("the ATE needs weights from both match directions")
    sign = np.where(ds.z == 1, 1.0, -1.0)
    return float(np.sum(sign * (1.0 + w.raw) * ds.y) / ds.n)


def att_matched(ds: Dataset, sol: MatchSolution) -> float:
    total, count = _matched_means(sol, ds.y, ds.n)
    treated = ds.z == 1
    assert np.all(count[treated] > 0), "treated unit without matches"
    return float(np.mean(ds.y[treated] - total[treated] / count[treated]))


def att_weighted(ds: Dataset, w: ImpliedWeights) -> float:
    sign = np.where(ds.z == 1, 1.0, -1.0)
    return float(np.sum(sign * w.estimator_form * ds.y))


def _arm_fit(B: np.ndarray, y: np.ndarray, notes: list, arm: str) -> np.ndarray:
    """Least-squares coefficients; ridge fallback when the design is rank deficient."""
    p = B.shape[1]
    if np.linalg.matrix_rank(B) < p:
        notes.append(f"singular basis regression in {arm} arm; ridge penalty {RIDGE_PENALTY:g}")
        return np.linalg.solve(B.T @ B + RIDGE_PENALTY * np.eye(p), B.T @ y)
    return np.linalg.lstsq(B, y, rcond=None)[0]


def plugin_influence(ds: Dataset, w: ImpliedWeights, bm: BasisMatrix,
                     point: float | None = None) -> tuple[np.ndarray, list]:
    """Estimated influence values for the ATE.

    n*w stands in for 1/pi on treated units and for 1/(1 - pi) on controls;
    outcome regressions are per-arm least squares on [1, B(x)].
    """
    if not w.both_directions:
        raise ValueError("plug-in variance needs weights from both directions")
    notes: list = []
    B = bm.values
    if not np.any(np.all(B == B[:1], axis=0)):
        B = np.column_stack([np.ones(ds.n), B])
    treated, control = ds.z == 1, ds.z == 0
    y1 = B @ _arm_fit(B[treated], ds.y[treated], notes, "treated")
    y0 = B @ _arm_fit(B[control], ds.y[control], notes, "control")
    inv = 1.0 + w.raw
    mu = ate_weighted(ds, w) if point is None else point
    s = (np.where(treated, inv * (ds.y - y1), 0.0)
         - np.where(control, inv * (ds.y - y0), 0.0)
         + y1 - y0 - mu)
    return s, notes


def variance_plugin(ds: Dataset, sols, bm: BasisMatrix) -> float:
    """Estimate of the asymptotic variance of sqrt(n) (mu_hat - mu)."""
    w = sols if isinstance(sols, ImpliedWeights) else implied_weights(sols, ds)
    s, _ = plugin_influence(ds, w, bm)
    return float(np.var(s, ddof=1))


@dataclass(frozen=True)
class EstimateResult:
    estimand: str
    point: float
    variance: float | None
    ci: tuple | None
    n_used: int
    level: float = 0.95
    diagnostics: dict = field(default_factory=dict)

    @property
    def se(self) -> float | None:
        return None if self.variance is None else math.sqrt(self.variance / self.n_used)

    def to_dict(self) -> dict:
        out = {
            "estimand": self.estimand,
            "point": self.point,
            "n": self.n_used,
            "level": self.level,
            "diagnostics": self.diagnostics,
        }
        if self.variance is not None:
            out["variance"] = self.variance
            out["variance_per_observation"] = self.variance / self.n_used
            out["se"] = self.se
            out["ci"] = list(self.ci)
        return out


def normal_ci(point: float, variance: float, n: int, level: float = 0.95) -> tuple:
    half = stats.norm.ppf(0.5 + level / 2) * math.sqrt(variance / n)
    return (point - half, point + half)


def estimate_ate(ds: Dataset, sols, bm: BasisMatrix, level: float = 0.95) -> EstimateResult:
    w = implied_weights(tuple(sols), ds)
    point = ate_matched(ds, sols)
    s, notes = plugin_influence(ds, w, bm, point)
    var = float(np.var(s, ddof=1))
    diag = {"m_values": {d.value: m for d, m in w.m_values.items()}}
    if notes:
        diag["notes"] = notes
    return EstimateResult("ATE", point, var, normal_ci(point, var, ds.n, level), ds.n, level, diag)


def estimate_att(ds: Dataset, sol: MatchSolution) -> EstimateResult:
    point = att_matched(ds, sol)
    diag = {"m_value": sol.m_value, "caveat": ATT_CAVEAT}
    return EstimateResult("ATT", point, None, None, ds.n, diagnostics=diag)


def oracle_efficiency_bound(dgp, draws: int = 200_000, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo value of the efficiency bound for a known DGP.

    E[ var(Y(1)|X)/pi(X) + var(Y(0)|X)/(1-pi(X)) + (tau(X) - tau)^2 ],
    returned with its Monte Carlo standard error.
    """
    rng = np.random.default_rng(seed)
    x = dgp.sample_x(rng, draws)
    pi = dgp.propensity(x)
    v1 = dgp.noise_var(x, 1)
    v0 = dgp.noise_var(x, 0)
    tau = dgp.mu1(x) - dgp.mu0(x)
    terms = v1 / pi + v0 / (1 - pi) + (tau - dgp.true_ate) ** 2
    return float(terms.mean()), float(terms.std(ddof=1) / math.sqrt(draws))
