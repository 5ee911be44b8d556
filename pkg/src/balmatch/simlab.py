"""Synthetic data-generating processes and the Monte Carlo harness.

Each replicate draws its data from a seed derived from (base seed, n index,
replicate index), so all estimators in an experiment see the same samples and
results do not depend on execution order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate, stats
from scipy.special import expit

from . import __version__
from .baseline import NNSpec, ate_nn
from .basis import BasisSpec, expand
from .data import Dataset
from .estimator import ate_weighted, plugin_influence
from .solver import DEFAULT_EXACT_LIMIT, BalanceSpec, Direction, solve_counts
from .weights import weights_from_counts

ESTIMATORS = ("balance_match", "nn_match")


@dataclass(frozen=True, eq=False)
class DGPSpec:
    """Fully specified synthetic model with known truth.

    Callables take an (n, d) covariate array. ``ate`` may be left None, in
    which case the true effect is integrated numerically over the unit cube
    (covariates must then be uniform on [0, 1]^d with d <= 3).
    """

    name: str
    d: int
    propensity: Callable
    mu0: Callable
    mu1: Callable
    sigma: float = 1.0
    ate: float | None = None
    basis: BasisSpec = BasisSpec()
    description: str = ""
    sampler: Callable | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise scale must be nonnegative")

    def sample_x(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.sampler is not None:
            return self.sampler(rng, n)
        return rng.uniform(size=(n, self.d))

    def noise_var(self, x: np.ndarray, z: int) -> np.ndarray:
        return np.full(len(x), self.sigma ** 2)

    def tau(self, x: np.ndarray) -> np.ndarray:
        return self.mu1(x) - self.mu0(x)

    @cached_property
    def true_ate(self) -> float:
        if self.ate is not None:
            return float(self.ate)
        return integrate_unit_cube(self.tau, self.d)

    @cached_property
    def marginal_propensity(self) -> float:
        return integrate_unit_cube(self.propensity, self.d)


def integrate_unit_cube(f: Callable, d: int, tol: float = 1e-8) -> float:
    """Integral of f over [0, 1]^d for d <= 3 (adaptive quadrature)."""
    if d > 3:
        raise ValueError("numerical integration is limited to d <= 3")

    def g(*args):
        return float(f(np.array([args]))[0])

    val, _ = integrate.nquad(g, [(0.0, 1.0)] * d, opts={"epsabs": tol, "epsrel": tol})
    return float(val)


def dgp_a(sigma: float = 1.0) -> DGPSpec:
    # logistic propensity in [0.27, 0.73]; quadratic means; effect 1 + x1*x2
    return DGPSpec(
        "A", 2,
        propensity=lambda x: expit(-1.0 + x[:, 0] + x[:, 1]),
        mu0=lambda x: x[:, 0] + x[:, 1] + x[:, 0] ** 2,
        mu1=lambda x: x[:, 0] + x[:, 1] + x[:, 0] ** 2 + 1.0 + x[:, 0] * x[:, 1],
        sigma=sigma, ate=1.25, basis=BasisSpec("polynomial", degree=2),
        description="d=2 uniform, logistic propensity, quadratic means, heterogeneous effect",
    )


def dgp_b(sigma: float = 1.0, tau: float = 1.0) -> DGPSpec:
    return DGPSpec(
        "B", 2,
        propensity=lambda x: np.full(len(x), 0.5),
        mu0=lambda x: x[:, 0] + 2.0 * x[:, 1],
        mu1=lambda x: x[:, 0] + 2.0 * x[:, 1] + tau,
        sigma=sigma, ate=tau, basis=BasisSpec("raw"),
        description="d=2 uniform, propensity 0.5, linear means, constant effect",
    )


def dgp_c(sigma: float = 1.0) -> DGPSpec:
    coef = np.linspace(1.0, 2.0, 8)
    return DGPSpec(
        "C", 8,
        propensity=lambda x: expit(0.5 * (x - 0.5).sum(axis=1)),
        mu0=lambda x: x @ coef,
        mu1=lambda x: x @ coef + 1.0,
        sigma=sigma, ate=1.0, basis=BasisSpec("raw"),
        description="d=8 uniform, logistic propensity, linear means, constant effect",
    )


def dgp_overlap(sigma: float = 1.0) -> DGPSpec:
    # logit within [-0.75, 0.75], so pi stays inside [0.32, 0.68]
    return DGPSpec(
        "D", 3,
        propensity=lambda x: expit(0.5 * (x.sum(axis=1) - 1.5)),
        mu0=lambda x: x.sum(axis=1),
        mu1=lambda x: x.sum(axis=1) + 1.0,
        sigma=sigma, ate=1.0, basis=BasisSpec("raw"),
        description="d=3 uniform, strong overlap, linear means, constant effect",
    )


DGPS = {"A": dgp_a, "B": dgp_b, "C": dgp_c, "D": dgp_overlap}


def get_dgp(name: str, **kw) -> DGPSpec:
    try:
        return DGPS[name.upper()](**kw)
    except KeyError:
        raise ValueError(f"unknown DGP {name!r}; choose from {sorted(DGPS)}") from None


def dgp_sample(spec: DGPSpec, n: int, seed) -> Dataset:
    """Draw X, assign Z ~ Bernoulli(pi(X)) and reveal Y = Z Y(1) + (1 - Z) Y(0)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    x = spec.sample_x(rng, n)
    z = (rng.uniform(size=n) < spec.propensity(x)).astype(np.int8)
    y0 = spec.mu0(x) + spec.sigma * rng.standard_normal(n)
    y1 = spec.mu1(x) + spec.sigma * rng.standard_normal(n)
    return Dataset.from_arrays(z, np.where(z == 1, y1, y0), x)


# ---------------------------------------------------------------- experiments


@dataclass(frozen=True)
class DeltaPolicy:
    """Either a fixed tolerance vector or delta_k = c n^{-1/2} sd(B_k)."""

    kind: str = "schedule"
    c: float = 0.5
    values: tuple = ()

    def build(self, bm) -> BalanceSpec:
        if self.kind == "schedule":
            return BalanceSpec.schedule(bm, self.c)
        vals = np.asarray(self.values, dtype=float)
        if vals.size == 1:
            vals = np.full(bm.K, vals.item())
        return BalanceSpec(vals)

    @classmethod
    def parse(cls, text: str) -> "DeltaPolicy":
        text = str(text)
        if text.startswith("schedule"):
            _, _, c = text.partition(":")
            return cls("schedule", float(c) if c else 0.5)
        return cls("fixed", values=tuple(float(v) for v in text.split(",")))


@dataclass(frozen=True)
class ExperimentSpec:
    dgp: str = "A"
    estimators: tuple = ("balance_match",)
    n_grid: tuple = (200, 400)
    reps: int = 100
    base_seed: int = 0
    delta: DeltaPolicy = DeltaPolicy()
    basis: BasisSpec | None = None
    nn: NNSpec = NNSpec()
    with_replacement: bool = True
    level: float = 0.95
    sigma: float = 1.0
    exact_limit: int = DEFAULT_EXACT_LIMIT

    def __post_init__(self):
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ValueError(f"unknown estimators {sorted(bad)}; choose from {ESTIMATORS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["basis"] = None if self.basis is None else self.basis.to_string()
        return d


@dataclass(frozen=True)
class Replicate:
    estimate: float
    se: float
    feasible: bool
    m_values: tuple = ()


def replicate_seed(base_seed: int, n_index: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([base_seed, n_index, rep])


def balance_estimate(ds: Dataset, basis: BasisSpec, delta: DeltaPolicy, with_replacement=True,
                     seed: int = 0, exact_limit: int = DEFAULT_EXACT_LIMIT):
    """ATE and plug-in standard error from balance matching, or None if infeasible.

    Uses the weighted form of the estimator computed from count vectors,
    which equals the pairwise form for the realized matching.
    """
    bm = expand(ds, basis)
    spec = delta.build(bm)
    counts = {}
    for d in Direction:
        cv, _ = solve_counts(bm, ds.z, spec, d, with_replacement, "maximize", exact_limit, seed)
        if cv is None:
            return None
        counts[d] = cv
    w = weights_from_counts(ds, counts)
    point = ate_weighted(ds, w)
    s, _ = plugin_influence(ds, w, bm, point)
    se = math.sqrt(np.var(s, ddof=1) / ds.n)
    return point, se, tuple(counts[d].m_value for d in Direction)


def _run_one(exp: ExperimentSpec, dgp: DGPSpec, n_index: int, n: int, rep: int) -> dict:
    ss = replicate_seed(exp.base_seed, n_index, rep)
    data_seed, solver_seed = ss.generate_state(2)
    ds = dgp_sample(dgp, n, data_seed)
    out = {}
    basis = exp.basis or dgp.basis
    for est in exp.estimators:
        if est == "balance_match":
            try:
                ds.require_both_arms()
                res = balance_estimate(ds, basis, exp.delta, exp.with_replacement,
                                       int(solver_seed), exp.exact_limit)
            except ValueError:
                res = None
            if res is None:
                out[est] = Replicate(float("nan"), float("nan"), False)
            else:
                out[est] = Replicate(res[0], res[1], True, res[2])
        else:
            try:
                out[est] = Replicate(ate_nn(ds, exp.nn), float("nan"), True)
            except ValueError:
                out[est] = Replicate(float("nan"), float("nan"), False)
    return out


@dataclass
class MCRow:
    estimator: str
    n: int
    replications: int
    infeasible: int
    bias: float
    rmse: float
    sd: float
    mean_se: float
    coverage: float

    CSV_FIELDS = ("estimator", "n", "replications", "infeasible", "bias", "rmse", "sd",
                  "mean_se", "coverage")


@dataclass
class MCReport:
    rows: list
    experiment: dict
    truth: float
    estimates: dict = field(default_factory=dict)

    def row(self, estimator: str, n: int) -> MCRow:
        for r in self.rows:
            if r.estimator == estimator and r.n == n:
                return r
        raise KeyError((estimator, n))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(MCRow.CSV_FIELDS)
        for r in self.rows:
            w.writerow([r.estimator, r.n, r.replications, r.infeasible,
                        *[repr(float(getattr(r, f))) for f in MCRow.CSV_FIELDS[4:]]])
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "version": __version__,
            "experiment": self.experiment,
            "truth": self.truth,
            "seeds": {"base_seed": self.experiment.get("base_seed"),
                      "replicate_seed": "SeedSequence([base_seed, n_index, replicate])"},
            "rows": [asdict(r) for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True, default=str)


def summarize_cell(estimator: str, n: int, reps: list, truth: float, level: float) -> MCRow:
    est = np.array([r.estimate for r in reps if r.feasible])
    se = np.array([r.se for r in reps if r.feasible])
    infeasible = len(reps) - len(est)
    nan = float("nan")
    if len(est) == 0:
        return MCRow(estimator, n, len(reps), infeasible, nan, nan, nan, nan, nan)
    err = est - truth
    bias = float(err.mean())
    sd = float(err.std())  # ddof=0 so that rmse^2 = bias^2 + sd^2
    rmse = float(math.sqrt(np.mean(err ** 2)))
    if np.all(np.isnan(se)):
        mean_se, cover = nan, nan
    else:
        zq = stats.norm.ppf(0.5 + level / 2)
        mean_se = float(np.mean(se))
        cover = float(np.mean(np.abs(err) <= zq * se))
    return MCRow(estimator, n, len(reps), infeasible, bias, rmse, sd, mean_se, cover)


def run_monte_carlo(exp: ExperimentSpec, threads: int = 1) -> MCReport:
    dgp = get_dgp(exp.dgp, sigma=exp.sigma)
    truth = dgp.true_ate
    tasks = [(i, n, r) for i, n in enumerate(exp.n_grid) for r in range(exp.reps)]
    if not exp.estimators:
        return MCReport([], exp.to_dict(), truth)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: _run_one(exp, dgp, *t), tasks))
    else:
        results = [_run_one(exp, dgp, *t) for t in tasks]
    # ordered reduction by (estimator, n, replicate)
    rows, estimates = [], {}
    for est in exp.estimators:
        for i, n in enumerate(exp.n_grid):
            reps = [res[est] for (j, _, _), res in zip(tasks, results) if j == i]
            rows.append(summarize_cell(est, n, reps, truth, exp.level))
            estimates[(est, n)] = reps
    return MCReport(rows, exp.to_dict(), truth, estimates)


def rate_fit(report: MCReport, estimator: str) -> float:
    """Least-squares slope of log RMSE against log n."""
    pts = [(r.n, r.rmse) for r in report.rows
           if r.estimator == estimator and np.isfinite(r.rmse) and r.rmse > 0]
    if len(pts) < 3:
        raise ValueError(f"rate fit needs at least 3 nonempty cells, got {len(pts)}")
    n, rmse = np.array(pts, dtype=float).T
    return float(np.polyfit(np.log(n), np.log(rmse), 1)[0])
