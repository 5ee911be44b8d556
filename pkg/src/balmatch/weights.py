"""Per-unit weights implied by a matching, and balance checks in weighted form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisMatrix
from .data import Dataset
from .solver import TIE_TOL, BalanceSpec, Direction, MatchSolution


class WeightError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ImpliedWeights:
    """Match-count weights for every unit of a dataset.

    ``raw[j]`` is (times unit j was used as a target) / M for the direction in
    which j is a target; units that are only ever sources carry 0.
    ``raw_unaveraged`` is the same before averaging over duplicate units.
    """

    raw: np.ndarray
    raw_unaveraged: np.ndarray
    z: np.ndarray
    m_values: dict
    directions: tuple

    @property
    def n(self) -> int:
        return len(self.raw)

    @property
    def both_directions(self) -> bool:
        return len(self.directions) == 2

    @property
    def estimator_form(self) -> np.ndarray:
        """Weights multiplying Y_j in the weighted form of the estimator.

        Both directions: 1/n + count/(nM). Treated-to-control only: 1/T for
        treated units and count/(MT) for controls.
        """
        if self.both_directions:
            return (1.0 + self.raw) / self.n
        T = int(np.sum(self.z == 1))
        return np.where(self.z == 1, 1.0, self.raw) / T

    def scaled_counts(self) -> np.ndarray:
        """M * w before averaging; integers by construction."""
        m = np.zeros(self.n)
        for d in self.directions:
            m[self.z == d.target_arm] = self.m_values[d]
        return m * self.raw_unaveraged


def _target_weights(sol: MatchSolution, n: int) -> np.ndarray:
    t = np.asarray(sol.targets, dtype=np.int64)
    if len(t) and (t.min() < 0 or t.max() >= n):
        raise WeightError("solution refers to units outside the dataset")
    return np.bincount(t, minlength=n) / sol.m_value


def average_duplicates(values: np.ndarray, z: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Replace each value by the mean over units with identical (z, x).

    Identity is exact equality of the stored floats.
    """
    out = np.array(values, dtype=float)
    classes: dict = {}
    for i in range(len(out)):
        classes.setdefault((int(z[i]), np.ascontiguousarray(x[i]).tobytes()), []).append(i)
    for members in classes.values():
        if len(members) > 1:
            out[members] = out[members].mean()
    return out


def implied_weights(sol, ds: Dataset, average_ties: bool = True) -> ImpliedWeights:
    """Weights from one solution (treated-to-control) or a pair of solutions."""
    sols = [s for s in (sol if isinstance(sol, (tuple, list)) else [sol]) if s is not None]
    if not sols:
        raise WeightError("no solution given")
    raw = np.zeros(ds.n)
    m_values, directions = {}, []
    for s in sols:
        if s.direction in m_values:
            raise WeightError(f"two solutions for direction {s.direction.value}")
        src = np.asarray(s.sources, dtype=np.int64)
        if len(src) and (src.min() < 0 or src.max() >= ds.n
                         or np.any(ds.z[src] != s.direction.source_arm)):
            raise WeightError("solution sources do not match the dataset's treatment arms")
        w = _target_weights(s, ds.n)
        if np.any(w[ds.z != s.direction.target_arm] != 0):
            raise WeightError("solution uses a source-arm unit as a target")
        raw += w
        m_values[s.direction] = s.m_value
        directions.append(s.direction)
    if len(directions) == 1 and directions[0] is not Direction.TREATED_TO_CONTROL:
        raise WeightError("a single solution must be treated_to_control")
    directions = tuple(sorted(directions, key=lambda d: d.value, reverse=True))
    averaged = average_duplicates(raw, ds.z, ds.x) if average_ties else raw.copy()
    for a in (raw, averaged):
        a.setflags(write=False)
    return ImpliedWeights(averaged, raw, ds.z, m_values, directions)


@dataclass(frozen=True)
class BalanceReport:
    """Weighted-form imbalance (1/S)|sum_src B - sum_tgt w B| per direction."""

    residuals: dict
    delta: np.ndarray

    @property
    def worst(self) -> dict:
        return {d: float(np.max(np.abs(r))) for d, r in self.residuals.items()}

    @property
    def worst_ratio(self) -> dict:
        out = {}
        for d, r in self.residuals.items():
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.where(np.isinf(self.delta), 0.0, np.abs(r) / self.delta)
            out[d] = float(np.nanmax(q))
        return out

    @property
    def passed(self) -> dict:
        return {d: bool(np.all(np.abs(r) < self.delta - TIE_TOL)) for d, r in self.residuals.items()}

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_dict(self, column_names=None) -> dict:
        out = {}
        for d, r in self.residuals.items():
            out[d.value] = {
                "residuals": r.tolist(),
                "worst_abs_residual": self.worst[d],
                "worst_ratio": self.worst_ratio[d],
                "passed": self.passed[d],
            }
            if column_names is not None:
                out[d.value]["columns"] = list(column_names)
        return out


def balance_residuals(w: np.ndarray, z: np.ndarray, B: np.ndarray, direction: Direction) -> np.ndarray:
    src = z == direction.source_arm
    tgt = z == direction.target_arm
    S = src.sum()
    return (B[src].sum(axis=0) - w[tgt] @ B[tgt]) / S


def check_balance(w: ImpliedWeights, bm: BasisMatrix, spec: BalanceSpec) -> BalanceReport:
    spec.check(bm.K)
    if bm.n != w.n:
        raise WeightError("weights and basis matrix have different numbers of units")
    res = {d: balance_residuals(w.raw, w.z, bm.values, d) for d in w.directions}
    return BalanceReport(res, spec.delta)


def weights_from_counts(ds: Dataset, counts: dict, average_ties: bool = True) -> ImpliedWeights:
    """Weights straight from per-direction count vectors (no pair list needed).

    ``counts`` maps Direction -> CountVector aligned with the target arm in
    row order. Equivalent to ``implied_weights`` on the realized solutions.
    """
    raw = np.zeros(ds.n)
    m_values = {}
    for d, cv in counts.items():
        tgt = np.flatnonzero(ds.z == d.target_arm)
        if len(cv.counts) != len(tgt):
            raise WeightError("count vector does not match the target arm size")
        raw[tgt] += np.asarray(cv.counts) / cv.m_value
        m_values[d] = cv.m_value
    directions = tuple(sorted(m_values, key=lambda d: d.value, reverse=True))
    averaged = average_duplicates(raw, ds.z, ds.x) if average_ties else raw.copy()
    return ImpliedWeights(averaged, raw, ds.z, m_values, directions)
