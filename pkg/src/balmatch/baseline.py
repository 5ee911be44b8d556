"""Nearest-neighbor matching with replacement, the comparison method."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .data import Dataset
from .estimator import ate_matched
from .solver import Direction, MatchSolution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NNSpec:
    metric: str = "euclidean"
    num_matches: int = 1

    def __post_init__(self):
        if self.metric not in ("euclidean", "mahalanobis"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.num_matches < 1:
            raise ValueError("num_matches must be >= 1")


def _distances(ds: Dataset, src: np.ndarray, tgt: np.ndarray, metric: str, notes: list):
    if metric == "mahalanobis":
        cov = np.atleast_2d(np.cov(ds.x, rowvar=False))
        if np.linalg.matrix_rank(cov) == cov.shape[0]:
            return cdist(ds.x[src], ds.x[tgt], "mahalanobis", VI=np.linalg.inv(cov))
        notes.append("pooled covariance is singular; fell back to euclidean distance")
        logger.warning(notes[-1])
    return cdist(ds.x[src], ds.x[tgt], "sqeuclidean")


def nn_match(ds: Dataset, spec: NNSpec = NNSpec(), direction=Direction.TREATED_TO_CONTROL,
             block: int = 512) -> MatchSolution:
    """Match every source unit to its M closest targets.

    Equal distances are resolved in favor of the lower unit index.
    """
    direction = Direction.parse(direction)
    src = np.flatnonzero(ds.z == direction.source_arm)
    tgt = np.flatnonzero(ds.z == direction.target_arm)
    M = spec.num_matches
    if len(tgt) == 0:
        raise ValueError("target arm is empty")
    if M > len(tgt):
        raise ValueError(f"num_matches={M} exceeds the {len(tgt)} available targets")
    notes: list = []
    picks = []
    for start in range(0, len(src), block):
        dist = _distances(ds, src[start:start + block], tgt, spec.metric, notes)
        # stable sort keeps index order among ties
        picks.append(np.argsort(dist, axis=1, kind="stable")[:, :M])
    chosen = np.vstack(picks)
    return MatchSolution(M, np.repeat(src, M), tgt[chosen.ravel()], direction, True,
                         tuple(dict.fromkeys(notes)))


def ate_nn(ds: Dataset, spec: NNSpec = NNSpec()) -> float:
    return ate_matched(ds, (nn_match(ds, spec, Direction.TREATED_TO_CONTROL),
                            nn_match(ds, spec, Direction.CONTROL_TO_TREATED)))
