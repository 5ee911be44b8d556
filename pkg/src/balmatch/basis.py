"""Covariate basis expansions B(x) and sample regularity diagnostics.

Column order is fixed: intercept (if any), then the per-dimension terms of
x1, x2, ... in index order, then cross terms in lexicographic order of their
variable indices.
"""

from __future__ import annotations

import itertools
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset

logger = logging.getLogger(__name__)

KINDS = ("raw", "polynomial", "spline", "interactions")


@dataclass(frozen=True)
class BasisSpec:
    kind: str = "raw"
    degree: int = 1
    knots: tuple = ()
    order: int = 2
    include_intercept: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "polynomial" and self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")
        if self.kind == "interactions" and self.order < 1:
            raise ValueError("interaction order must be >= 1")
        if self.kind == "spline":
            knots = tuple(tuple(float(v) for v in k) for k in self.knots)
            for k in knots:
                if any(b <= a for a, b in zip(k, k[1:])):
                    raise ValueError("spline knots must be strictly increasing")
            object.__setattr__(self, "knots", knots)

    @classmethod
    def parse(cls, text: str) -> "BasisSpec":
        """Parse ``raw``, ``poly:3``, ``interactions:2`` or ``spline:0.25,0.5;0.3``.

        Spline knots are comma separated, with ``;`` separating dimensions; a
        single knot list applies to every dimension. Append ``+intercept``
        to prepend a constant column.
        """
        text = text.strip()
        intercept = False
        if text.endswith("+intercept"):
            intercept = True
            text = text[: -len("+intercept")]
        kind, _, arg = text.partition(":")
        kind = {"poly": "polynomial", "inter": "interactions"}.get(kind, kind)
        if kind == "raw":
            return cls("raw", include_intercept=intercept)
        if kind == "polynomial":
            return cls("polynomial", degree=int(arg or 2), include_intercept=intercept)
        if kind == "interactions":
            return cls("interactions", order=int(arg or 2), include_intercept=intercept)
        if kind == "spline":
            dims = [d for d in arg.split(";")]
            knots = tuple(tuple(float(v) for v in re.split(r"[,\s]+", d.strip()) if v) for d in dims)
            return cls("spline", knots=knots, include_intercept=intercept)
        raise ValueError(f"cannot parse basis spec {text!r}")

    def to_string(self) -> str:
        if self.kind == "raw":
            s = "raw"
        elif self.kind == "polynomial":
            s = f"poly:{self.degree}"
        elif self.kind == "interactions":
            s = f"interactions:{self.order}"
        else:
            s = "spline:" + ";".join(",".join(repr(v) for v in k) for k in self.knots)
        return s + ("+intercept" if self.include_intercept else "")

    def knots_for(self, dim: int, d: int) -> tuple:
        if len(self.knots) == 1:
            return self.knots[0]
        if len(self.knots) != d:
            raise ValueError(f"spline spec gives knots for {len(self.knots)} dimensions, data has {d}")
        return self.knots[dim]


@dataclass(frozen=True, eq=False)
class BasisMatrix:
    values: np.ndarray
    spec: BasisSpec
    column_names: tuple
    warnings: tuple = field(default=())

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1]


def _columns(x: np.ndarray, spec: BasisSpec):
    n, d = x.shape
    cols, names = [], []
    if spec.include_intercept:
        cols.append(np.ones(n))
        names.append("1")
    if spec.kind == "raw":
        for j in range(d):
            cols.append(x[:, j])
            names.append(f"x{j + 1}")
    elif spec.kind == "polynomial":
        for j in range(d):
            for p in range(1, spec.degree + 1):
                cols.append(x[:, j] ** p)
                names.append(f"x{j + 1}" if p == 1 else f"x{j + 1}^{p}")
        # mixed monomials of total degree <= degree
        for size in range(2, min(d, spec.degree) + 1):
            for idx in itertools.combinations(range(d), size):
                for powers in itertools.product(range(1, spec.degree + 1), repeat=size):
                    if sum(powers) > spec.degree:
                        continue
                    col = np.ones(n)
                    for j, p in zip(idx, powers):
                        col = col * x[:, j] ** p
                    cols.append(col)
                    names.append("*".join(f"x{j + 1}" if p == 1 else f"x{j + 1}^{p}"
                                          for j, p in zip(idx, powers)))
    elif spec.kind == "spline":
        for j in range(d):
            cols.append(x[:, j])
            names.append(f"x{j + 1}")
            for kn in spec.knots_for(j, d):
                cols.append(np.maximum(x[:, j] - kn, 0.0))
                names.append(f"(x{j + 1}-{kn!r})+")
    elif spec.kind == "interactions":
        for j in range(d):
            cols.append(x[:, j])
            names.append(f"x{j + 1}")
        for size in range(2, min(d, spec.order) + 1):
            for idx in itertools.combinations(range(d), size):
                cols.append(np.prod(x[:, list(idx)], axis=1))
                names.append("*".join(f"x{j + 1}" for j in idx))
    return cols, names


def expand(ds: Dataset | np.ndarray, spec: BasisSpec) -> BasisMatrix:
    """Evaluate B(X_i) for every unit.

    Records a note in ``warnings`` when K exceeds sqrt(n), where the growth
    condition K = o(n^{1/2}) is plainly violated; K > n is also logged.
    """
    x = ds.x if isinstance(ds, Dataset) else np.atleast_2d(np.asarray(ds, dtype=float))
    cols, names = _columns(x, spec)
    if not cols:
        raise ValueError("basis spec produced no columns")
    values = np.column_stack(cols).astype(float)
    values.setflags(write=False)
    n, K = values.shape
    notes = []
    if K > n:
        notes.append(f"K={K} exceeds n={n}")
    if K > math.sqrt(n):
        notes.append(f"growth condition K = o(n^1/2) violated: K={K}, sqrt(n)={math.sqrt(n):.2f}")
    if K > n:
        logger.warning(notes[0])
    return BasisMatrix(values, spec, tuple(names), tuple(notes))


@dataclass(frozen=True)
class RegularityReport:
    sup_norm_ratio: float
    gram_operator_norm: float
    gram_min_eigenvalue: float
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "sup_norm_ratio": self.sup_norm_ratio,
            "gram_operator_norm": self.gram_operator_norm,
            "gram_min_eigenvalue": self.gram_min_eigenvalue,
            "degenerate": self.degenerate,
        }


DEGENERACY_THRESHOLD = 1e-10


def check_regularity(bm: BasisMatrix) -> RegularityReport:
    """Sample analogues of the three basis regularity constants.

    ``sup_norm_ratio`` is max_i ||B(X_i)|| / sqrt(K); the Gram matrix is
    (1/n) sum_i B(X_i) B(X_i)^T.
    """
    B = bm.values
    n, K = B.shape
    sup_ratio = float(np.max(np.linalg.norm(B, axis=1)) / math.sqrt(K))
    gram = B.T @ B / n
    eig = np.linalg.eigvalsh(gram)
    lo = float(eig[0])
    return RegularityReport(sup_ratio, float(eig[-1]), lo, lo <= DEGENERACY_THRESHOLD)
