"""Brute-force ground truth for the balance-matching integer program.

Enumerates binary match matrices source by source (every M-subset of
targets for each source), deduplicating partial matrices that share column
sums while keeping one witness matrix per class. Balance is evaluated on the
witness matrix with the pairwise-difference form of the constraint, so no
part of the count-vector solver is reused.
"""

from __future__ import annotations

import itertools

import numpy as np

from .basis import BasisMatrix

MAX_UNITS = 8
MAX_STATES = 2_000_000


class OracleTooLarge(ValueError):
    pass


def _pairwise_imbalance(m: np.ndarray, Bs: np.ndarray, Bt: np.ndarray) -> np.ndarray:
    # m: (F, S, C) binary; returns (F, K) of sum_ij m_ij (B_i - B_j) / sum_ij m_ij
    diff = Bs[:, None, :] - Bt[None, :, :]
    num = np.einsum("fsc,sck->fk", m, diff)
    return num / m.sum(axis=(1, 2))[:, None]


def _enumerate(S: int, C: int, M: int, cap: int):
    """Yield (column sums, witness matrices) of all valid S x C matrices."""
    subsets = np.array([[1 if j in comb else 0 for j in range(C)]
                        for comb in itertools.combinations(range(C), M)], dtype=np.int64)
    states = np.zeros((1, C), dtype=np.int64)
    parents, choices = [], []
    for _ in range(S):
        cand = (states[:, None, :] + subsets[None, :, :]).reshape(-1, C)
        par = np.repeat(np.arange(len(states)), len(subsets))
        cho = np.tile(np.arange(len(subsets)), len(states))
        ok = np.all(cand <= cap, axis=1)
        cand, par, cho = cand[ok], par[ok], cho[ok]
        if len(cand) == 0:
            return np.zeros((0, C), dtype=np.int64), np.zeros((0, S, C))
        states, first = np.unique(cand, axis=0, return_index=True)
        if len(states) > MAX_STATES:
            raise OracleTooLarge("enumeration exceeds the oracle state limit")
        parents.append(par[first])
        choices.append(cho[first])
    # walk parent pointers back to one witness matrix per final state
    F = len(states)
    witness = np.zeros((F, S, C))
    idx = np.arange(F)
    for layer in range(S - 1, -1, -1):
        witness[:, layer, :] = subsets[choices[layer][idx]]
        idx = parents[layer][idx]
    return states, witness


def oracle_max_m(bm: BasisMatrix, arms, delta, direction, with_replacement: bool = True):
    """Largest M admitting a balanced binary matching, or None.

    Limited to at most 8 units per arm.
    """
    from .solver import Direction

    direction = Direction.parse(direction)
    arms = np.asarray(arms)
    delta = np.asarray(delta.delta if hasattr(delta, "delta") else delta, dtype=float)
    src = np.flatnonzero(arms == direction.source_arm)
    tgt = np.flatnonzero(arms == direction.target_arm)
    S, C = len(src), len(tgt)
    if S > MAX_UNITS or C > MAX_UNITS:
        raise OracleTooLarge(f"oracle handles at most {MAX_UNITS} units per arm (got {S}, {C})")
    if S == 0 or C == 0:
        raise ValueError("both arms must be nonempty")
    if not with_replacement and direction is not Direction.TREATED_TO_CONTROL:
        raise ValueError("without replacement is only defined for treated_to_control")
    Bs, Bt = bm.values[src], bm.values[tgt]
    cap = S if with_replacement else 1
    for M in range(C, 0, -1):
        if not with_replacement and M * S > C:
            continue
        _, witness = _enumerate(S, C, M, cap)
        if len(witness) == 0:
            continue
        imb = _pairwise_imbalance(witness, Bs, Bt)
        ok = np.all(np.abs(imb) < delta[None, :] - 1e-12, axis=1)
        if ok.any():
            return M
    return None
