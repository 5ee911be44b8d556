"""Matching for aggregate balance: maximize the per-unit match count M.

The balance constraints only see a matching through its column counts
c_j = number of sources matched to target j, so the search runs over integer
count vectors and a feasible vector is turned into an explicit pair list by
a greedy pass (``realize_assignment``).

Work is done in normalized units p_j = c_j / (M S), where S is the number of
source units. Then sum(p) = 1, p_j <= ub / (M S) and balance reads
|mean_source(B_k) - sum_j p_j B_k(X_j)| < delta_k.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog

from .basis import BasisMatrix

logger = logging.getLogger(__name__)

# ties at exactly delta_k are infeasible; float comparisons use this margin
TIE_TOL = 1e-12
# LP pruning is loosened by this much so that it never cuts a feasible point
LP_SLACK = 1e-9
DEFAULT_EXACT_LIMIT = 12
DEFAULT_NODE_LIMIT = 200_000


class Direction(enum.Enum):
    TREATED_TO_CONTROL = "treated_to_control"
    CONTROL_TO_TREATED = "control_to_treated"

    @property
    def source_arm(self) -> int:
        return 1 if self is Direction.TREATED_TO_CONTROL else 0

    @property
    def target_arm(self) -> int:
        return 1 - self.source_arm

    @classmethod
    def parse(cls, value) -> "Direction":
        if isinstance(value, Direction):
            return value
        aliases = {"t2c": cls.TREATED_TO_CONTROL, "c2t": cls.CONTROL_TO_TREATED}
        return aliases.get(value) or cls(value)


class SolverError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BalanceSpec:
    delta: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.delta, dtype=float))
        if d.ndim != 1 or np.any(np.isnan(d)) or np.any(d < 0):
            raise SolverError("delta must be a vector of nonnegative tolerances")
        d.setflags(write=False)
        object.__setattr__(self, "delta", d)

    @property
    def K(self) -> int:
        return len(self.delta)

    @classmethod
    def uniform(cls, value: float, K: int) -> "BalanceSpec":
        return cls(np.full(K, float(value)))

    @classmethod
    def schedule(cls, bm: BasisMatrix, c: float = 0.5) -> "BalanceSpec":
        """delta_k = c * n^{-1/2} * sd(B_k), the shrinking-imbalance default.

        Constant columns get an infinite tolerance (their imbalance is
        identically zero once the match counts sum correctly).
        """
        sd = bm.values.std(axis=0)
        delta = c * sd / math.sqrt(bm.n)
        delta = np.where(sd > 0, delta, np.inf)
        return cls(delta)

    def check(self, K: int):
        if self.K != K:
            raise SolverError(f"delta has length {self.K} but the basis has K={K}")


def strictly_within(residual: np.ndarray, delta: np.ndarray) -> bool:
    return bool(np.all(np.abs(residual) < delta - TIE_TOL))


@dataclass(frozen=True, eq=False)
class MatchSolution:
    """Ordered (source, target) pairs, each source matched exactly M times."""

    m_value: int
    sources: np.ndarray
    targets: np.ndarray
    direction: Direction
    with_replacement: bool = True
    notes: tuple = field(default=())

    @property
    def pairs(self) -> list:
        return list(zip(self.sources.tolist(), self.targets.tolist()))

    def __len__(self):
        return len(self.sources)


@dataclass(frozen=True, eq=False)
class CountVector:
    counts: np.ndarray
    m_value: int
    n_sources: int

    @property
    def total(self) -> int:
        return int(self.counts.sum())


class MPolicy(NamedTuple):
    kind: str = "maximize"
    m: int | None = None

    @classmethod
    def parse(cls, text) -> "MPolicy":
        if isinstance(text, MPolicy):
            return text
        text = str(text).strip()
        if text in ("maximize", "max"):
            return cls("maximize")
        kind, _, m = text.partition(":")
        if kind in ("fixed", "below") and m:
            return cls(kind, int(m))
        raise SolverError(f"bad M policy {text!r}; use maximize, fixed:M or below:M")

    def __str__(self):
        return self.kind if self.m is None else f"{self.kind}:{self.m}"


@dataclass
class Probe:
    """Diagnostic record of one count-vector search."""

    m_value: int
    status: str  # feasible | infeasible | lp-bound | heuristic-infeasible
    worst_ratio: float = float("nan")


@dataclass
class SearchLog:
    probes: list = field(default_factory=list)
    lp_bound: int | None = None
    mode: str = "exact"


# ---------------------------------------------------------------- problem setup


class _Problem:
    """One direction of the balance problem in normalized units."""

    def __init__(self, bm: BasisMatrix, arms, spec: BalanceSpec, direction: Direction,
                 with_replacement: bool):
        arms = np.asarray(arms)
        if arms.shape != (bm.n,):
            raise SolverError(f"{len(arms)} treatment flags for a basis with {bm.n} rows")
        spec.check(bm.K)
        direction = Direction.parse(direction)
        if not with_replacement and direction is Direction.CONTROL_TO_TREATED:
            raise SolverError("matching without replacement is only defined for treated_to_control")
        self.direction = direction
        self.with_replacement = with_replacement
        self.src = np.flatnonzero(arms == direction.source_arm)
        self.tgt = np.flatnonzero(arms == direction.target_arm)
        if len(self.src) == 0 or len(self.tgt) == 0:
            raise SolverError("both arms must be nonempty")
        self.S, self.C = len(self.src), len(self.tgt)
        self.ub = self.S if with_replacement else 1
        self.m_max = self.C if with_replacement else self.C // self.S
        B = bm.values
        self.mean_src = B[self.src].mean(axis=0)
        self.Bt = B[self.tgt]
        self.delta = spec.delta
        active = np.isfinite(spec.delta)
        scale = np.abs(B).max(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        self.active = active
        # scaled rows for the LPs: (Bt/s)^T p - mean/s within +-delta/s
        self.lp_A = (self.Bt[:, active] / scale[active]).T
        self.lp_b = self.mean_src[active] / scale[active]
        self.lp_d = spec.delta[active] / scale[active]
        self._cap_cache = {}

    @property
    def K_active(self) -> int:
        return int(self.active.sum())

    def residual(self, counts: np.ndarray, M: int) -> np.ndarray:
        return self.mean_src - counts @ self.Bt / (M * self.S)

    def feasible(self, counts: np.ndarray, M: int) -> bool:
        return strictly_within(self.residual(counts, M), self.delta)

    def worst_ratio(self, counts: np.ndarray, M: int) -> float:
        r = np.abs(self.residual(counts, M))
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(np.isinf(self.delta), 0.0, r / self.delta)
        return float(np.nanmax(q)) if len(q) else 0.0

    def _balance_rows(self, shrink: float = 1.0, slack: float = 0.0):
        if not self.active.any():
            return None, None
        d = self.lp_d * shrink + slack * np.maximum(1.0, self.lp_d)
        A = np.vstack([self.lp_A, -self.lp_A])
        b = np.concatenate([self.lp_b + d, -self.lp_b + d])
        return A, b

    def lp_counts(self, M: int, lo=None, hi=None, shrink: float = 1.0,
                  slack: float = 0.0) -> np.ndarray | None:
        """Solve the LP relaxation at multiplicity M; returns real-valued counts."""
        MS = M * self.S
        lo = np.zeros(self.C) if lo is None else lo
        hi = np.full(self.C, self.ub, dtype=float) if hi is None else hi
        if lo.sum() > MS + 1e-9 or hi.sum() < MS - 1e-9:
            return None
        A, b = self._balance_rows(shrink, slack)
        res = linprog(
            np.zeros(self.C), A_ub=A, b_ub=b,
            A_eq=np.ones((1, self.C)), b_eq=[1.0],
            bounds=np.column_stack([lo / MS, hi / MS]), method="highs",
        )
        if res.status != 0:
            return None
        return np.clip(res.x * MS, lo, hi)

    def cap_lp(self, shrink: float = 1.0, slack: float = 0.0):
        """Most even balancing weights: minimize max_j p_j.

        In normalized units the only M-dependence is the cap p_j <= ub/(M S),
        so LP feasibility is monotone in M: the returned bound is the largest
        M whose relaxation is feasible, and the returned p is feasible for
        every M up to it. Solved as max t over q = t p in [0, 1].
        Returns (bound, p); bound is 0 and p None if nothing balances.
        """
        key = (shrink, slack)
        if key in self._cap_cache:
            return self._cap_cache[key]
        C = self.C
        A, b = self._balance_rows(shrink, slack)
        A_eq = np.concatenate([np.ones(C), [-1.0]])[None, :]
        A_ub = b_ub = None
        if A is not None:
            A_ub = np.hstack([A, -b[:, None]])
            b_ub = np.zeros(len(b))
        c = np.zeros(C + 1)
        c[-1] = -1.0
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[0.0],
                      bounds=[(0, 1)] * C + [(0, None)], method="highs-ipm")
        out = (0, None)
        if res.status == 0 and res.x[-1] > 1e-12:
            t = res.x[-1]
            p = np.clip(res.x[:C], 0, None)
            p = p / p.sum()
            m = int(math.floor(self.ub * t / self.S * (1 + 1e-7)))
            out = (max(0, min(m, self.m_max)), p)
        self._cap_cache[key] = out
        return out

    def lp_max_m(self) -> int:
        """Upper bound on the feasible M (LP relaxation, loosened by LP_SLACK)."""
        return self.cap_lp(1.0, LP_SLACK)[0]


# ---------------------------------------------------------------- exact search


def _branch_and_bound(prob: _Problem, M: int, node_limit: int) -> tuple[np.ndarray | None, str]:
    MS = M * prob.S
    stack = [(np.zeros(prob.C), np.full(prob.C, float(prob.ub)))]
    nodes = 0
    while stack:
        lo, hi = stack.pop()
        nodes += 1
        if nodes > node_limit:
            return None, "node-limit"
        x = prob.lp_counts(M, lo, hi, slack=LP_SLACK)
        if x is None:
            continue
        frac = np.abs(x - np.round(x))
        j = int(np.argmax(frac))
        if frac[j] > 1e-7:
            v = x[j]
            down_hi, up_lo = hi.copy(), lo.copy()
            down_hi[j] = math.floor(v)
            up_lo[j] = math.ceil(v)
            down, up = (lo, down_hi), (up_lo, hi)
            # depth first, nearer child explored first
            stack.extend([down, up] if v - math.floor(v) > 0.5 else [up, down])
            continue
        c = np.round(x).astype(np.int64)
        if c.sum() == MS and prob.feasible(c, M):
            return c, "feasible"
        # integral LP point that fails the strict check: split an open domain
        open_vars = np.flatnonzero(hi > lo)
        if len(open_vars) == 0:
            continue
        j = int(open_vars[0])
        v = float(c[j])
        for a, b in ((v + 1, hi[j]), (lo[j], v - 1), (v, v)):
            if a <= b:
                nlo, nhi = lo.copy(), hi.copy()
                nlo[j], nhi[j] = a, b
                stack.append((nlo, nhi))
    return None, "infeasible"


# ---------------------------------------------------------------- heuristic search


def _round_preserving_sum(x: np.ndarray, total: int, rng: np.random.Generator) -> np.ndarray:
    base = np.floor(x + 1e-9)
    frac = np.clip(x - base, 0.0, 1.0)
    need = int(total - base.sum())
    c = base.astype(np.int64)
    if need <= 0:
        return c
    # systematic sampling: selects exactly `need` units with P(j) = frac_j
    cum = np.cumsum(frac)
    cum *= need / cum[-1]
    points = rng.uniform() + np.arange(need)
    picks = np.searchsorted(cum, points, side="right")
    c[np.minimum(picks, len(c) - 1)] += 1
    return c


def _repair(prob: _Problem, c: np.ndarray, M: int, max_steps: int) -> np.ndarray:
    """Greedy +1/-1 count swaps that lower the worst normalized violation."""
    if not prob.active.any():
        return c
    d = prob.delta[prob.active]
    scale = 1.0 / (M * prob.S * d)
    Bn = prob.Bt[:, prob.active] * scale  # effect of one extra count, normalized
    g = (c @ prob.Bt[:, prob.active] - M * prob.S * prob.mean_src[prob.active]) * scale
    c = c.copy()
    for _ in range(max_steps):
        worst = np.max(np.abs(g))
        if worst < 1 - 1e-9:
            break
        can_up = c < prob.ub
        can_down = c > 0
        if not can_up.any() or not can_down.any():
            break
        up_score = np.max(np.abs(g + Bn), axis=1)
        up_score[~can_up] = np.inf
        best = None
        for a in np.argsort(up_score, kind="stable")[:8]:
            if not can_up[a]:
                break
            down_score = np.max(np.abs(g + Bn[a] - Bn), axis=1)
            down_score[~can_down] = np.inf
            down_score[a] = np.inf
            b = int(np.argmin(down_score))
            if best is None or down_score[b] < best[0]:
                best = (down_score[b], int(a), b)
        if best is None or best[0] >= worst - 1e-12:
            break
        _, a, b = best
        c[a] += 1
        c[b] -= 1
        g = g + Bn[a] - Bn[b]
    return c


HEURISTIC_SHRINKS = (0.5, 0.8, 0.95, 1.0)


def _heuristic(prob: _Problem, M: int, seed: int, tries: int = 3) -> np.ndarray | None:
    """Round an LP point to integer counts and repair the balance greedily.

    LP points come from the cap LP at shrunken tolerances (more room for
    rounding error) before the full tolerance is used.
    """
    MS = M * prob.S
    rng = np.random.default_rng([seed, M, prob.direction.source_arm])
    for shrink in HEURISTIC_SHRINKS:
        bound, p = prob.cap_lp(shrink)
        if p is None or bound < M:
            continue
        x = np.minimum(p * MS, prob.ub)
        for _ in range(tries):
            c = _round_preserving_sum(x, MS, rng)
            if np.any(c > prob.ub):
                continue
            c = _repair(prob, c, M, max_steps=20 * max(1, prob.K_active))
            if c.sum() == MS and prob.feasible(c, M):
                return c
    return None


# ---------------------------------------------------------------- public API


def _search(prob: _Problem, M: int, exact_limit: int, seed: int,
            node_limit: int = DEFAULT_NODE_LIMIT) -> tuple[np.ndarray | None, str]:
    if prob.C <= exact_limit:
        c, status = _branch_and_bound(prob, M, node_limit)
        if status != "node-limit":
            return c, status
        logger.warning("branch-and-bound node limit hit at M=%d; using heuristic", M)
    c = _heuristic(prob, M, seed)
    if c is not None:
        return c, "feasible"
    return None, "heuristic-infeasible"


def feasible_counts(bm: BasisMatrix, arms, spec: BalanceSpec, direction, M: int,
                    with_replacement: bool = True, exact_limit: int = DEFAULT_EXACT_LIMIT,
                    seed: int = 0) -> CountVector | None:
    """Find target counts c with sum M*S meeting every balance tolerance.

    Exact (branch-and-bound) when the target arm has at most ``exact_limit``
    units; otherwise LP relaxation, randomized rounding and local repair,
    which can miss feasible vectors.
    """
    if M < 1:
        raise SolverError("M must be >= 1")
    prob = _Problem(bm, arms, spec, direction, with_replacement)
    if M > prob.m_max:
        return None
    c, _ = _search(prob, M, exact_limit, seed)
    return None if c is None else CountVector(c, M, prob.S)


def realize_assignment(cv: CountVector | Sequence[int], sources: Sequence, targets: Sequence,
                       M: int | None = None, direction=Direction.TREATED_TO_CONTROL,
                       with_replacement: bool = True) -> MatchSolution:
    """Turn per-target counts into explicit pairs.

    Targets are visited in order and each takes the first c_j sources that
    still have fewer than M matches. When that pass runs out of open sources
    the whole construction is redone taking, for each target, the c_j
    sources with the most remaining capacity (lowest index on ties), which
    always succeeds for valid counts.
    """
    counts = np.asarray(cv.counts if isinstance(cv, CountVector) else cv, dtype=np.int64)
    if M is None:
        if not isinstance(cv, CountVector):
            raise SolverError("M is required with a bare count sequence")
        M = cv.m_value
    S, C = len(sources), len(targets)
    if len(counts) != C:
        raise SolverError(f"{len(counts)} counts for {C} targets")
    if M < 1 or np.any(counts < 0) or np.any(counts > S) or counts.sum() != M * S:
        raise SolverError(
            f"invalid count vector: need 0 <= c_j <= {S} and sum(c) = M*S = {M * S}, "
            f"got sum {int(counts.sum())}")
    src_idx = np.empty(M * S, dtype=np.int64)
    tgt_idx = np.repeat(np.arange(C), counts)
    filled = np.zeros(S, dtype=np.int64)
    first_open, pos, blocked = 0, 0, False
    # under this pass counts stay nonincreasing in source order, so the open
    # sources are always the contiguous block starting at first_open
    for j in range(C):
        k = int(counts[j])
        if k == 0:
            continue
        if first_open + k > S:
            blocked = True
            break
        src_idx[pos:pos + k] = np.arange(first_open, first_open + k)
        filled[first_open:first_open + k] += 1
        pos += k
        while first_open < S and filled[first_open] == M:
            first_open += 1
    notes = ()
    if blocked:
        notes = ("greedy pass blocked; used largest-remaining-capacity assignment",)
        remaining = np.full(S, M, dtype=np.int64)
        pos = 0
        for j in range(C):
            k = int(counts[j])
            if k == 0:
                continue
            chosen = np.sort(np.argsort(-remaining, kind="stable")[:k])
            src_idx[pos:pos + k] = chosen
            remaining[chosen] -= 1
            pos += k
    sources = np.asarray(sources)
    targets = np.asarray(targets)
    return MatchSolution(M, sources[src_idx], targets[tgt_idx], Direction.parse(direction),
                         with_replacement, notes)


def _policy_range(policy: MPolicy, m_max: int):
    if policy.kind == "maximize":
        return range(m_max, 0, -1)
    if policy.m is None or policy.m < 1:
        raise SolverError(f"M policy {policy} needs a positive M")
    if policy.kind == "fixed":
        return range(policy.m, policy.m - 1, -1) if policy.m <= m_max else range(0)
    return range(min(policy.m, m_max), 0, -1)


def solve_counts(bm: BasisMatrix, arms, spec: BalanceSpec, direction,
                 with_replacement: bool = True, m_policy="maximize",
                 exact_limit: int = DEFAULT_EXACT_LIMIT, seed: int = 0,
                 log: SearchLog | None = None) -> tuple[CountVector | None, "_Problem"]:
    """Count-vector half of ``solve_balance_match`` (no pair construction)."""
    prob = _Problem(bm, arms, spec, direction, with_replacement)
    policy = MPolicy.parse(m_policy)
    log = log if log is not None else SearchLog()
    log.mode = "exact" if prob.C <= exact_limit else "heuristic"
    bound = prob.lp_max_m()
    log.lp_bound = bound
    # every M above the LP bound is infeasible; feasibility itself is not
    # assumed monotone below it, so each remaining M is probed in turn
    for M in _policy_range(policy, prob.m_max):
        if M > bound:
            log.probes.append(Probe(M, "lp-bound"))
            continue
        c, status = _search(prob, M, exact_limit, seed)
        if c is not None:
            log.probes.append(Probe(M, status, prob.worst_ratio(c, M)))
            return CountVector(c, M, prob.S), prob
        log.probes.append(Probe(M, status))
    return None, prob


def solve_balance_match(bm: BasisMatrix, arms, spec: BalanceSpec, direction,
                        with_replacement: bool = True, m_policy="maximize",
                        exact_limit: int = DEFAULT_EXACT_LIMIT, seed: int = 0,
                        log: SearchLog | None = None) -> MatchSolution | None:
    """Largest-M (or policy-selected M) balanced matching in one direction.

    Pairs are returned as row indices into the basis matrix.
    """
    cv, prob = solve_counts(bm, arms, spec, direction, with_replacement, m_policy,
                            exact_limit, seed, log)
    if cv is None:
        return None
    return realize_assignment(cv, prob.src, prob.tgt, cv.m_value, prob.direction,
                              with_replacement)


class BothDirections(NamedTuple):
    treated_to_control: MatchSolution | None
    control_to_treated: MatchSolution | None

    @property
    def failed(self) -> list:
        return [d for d, s in zip(Direction, self) if s is None]


def solve_both_directions(bm: BasisMatrix, arms, spec: BalanceSpec,
                          with_replacement: bool = True, m_policy="maximize",
                          exact_limit: int = DEFAULT_EXACT_LIMIT, seed: int = 0,
                          return_partial: bool = False):
    """Solve both one-directional problems independently.

    Returns the pair of solutions, or None if either direction is
    infeasible. With ``return_partial`` a ``BothDirections`` tuple is always
    returned so the failing direction can be read off ``.failed``.
    """
    sols = BothDirections(*(
        solve_balance_match(bm, arms, spec, d, with_replacement, m_policy, exact_limit, seed)
        for d in Direction))
    if sols.failed:
        logger.info("infeasible direction(s): %s", ", ".join(d.value for d in sols.failed))
        return sols if return_partial else None
    return sols


def _minimax_lp(prob: _Problem):
    A, d, C = prob.lp_A, prob.lp_d, prob.C
    # minimize t subject to |A p - b| <= t d, sum p = 1, p >= 0
    A_ub = np.vstack([np.hstack([A, -d[:, None]]), np.hstack([-A, -d[:, None]])])
    b_ub = np.concatenate([prob.lp_b, -prob.lp_b])
    c = np.zeros(C + 1)
    c[-1] = 1.0
    return linprog(c, A_ub=A_ub, b_ub=b_ub,
                   A_eq=np.concatenate([np.ones(C), [0.0]])[None, :], b_eq=[1.0],
                   bounds=[(0, None)] * (C + 1), method="highs")


def min_worst_ratio(bm: BasisMatrix, arms, spec: BalanceSpec, direction) -> float:
    """Smallest achievable max_k |imbalance_k| / delta_k over all weightings.

    Lower bound for any matching; values >= 1 certify infeasibility.
    """
    return worst_violation(bm, arms, spec, direction)["ratio"]


def worst_violation(bm: BasisMatrix, arms, spec: BalanceSpec, direction,
                    column_names=None) -> dict:
    """Best achievable worst ratio and the basis column attaining it."""
    prob = _Problem(bm, arms, spec, direction, True)
    if not prob.active.any():
        return {"ratio": 0.0, "column": None, "residual": 0.0, "delta": None}
    res = _minimax_lp(prob)
    if res.status != 0:
        return {"ratio": float("inf"), "column": None, "residual": None, "delta": None}
    p = np.clip(res.x[:prob.C], 0, None)
    resid = prob.mean_src - p @ prob.Bt
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(prob.active, np.abs(resid) / prob.delta, 0.0)
    k = int(np.argmax(ratio))
    names = column_names if column_names is not None else bm.column_names
    return {"ratio": float(res.fun), "column": names[k], "residual": float(resid[k]),
            "delta": float(prob.delta[k])}


def pair_counts(sol: MatchSolution, n: int) -> np.ndarray:
    """Number of times each row index appears as a target."""
    return np.bincount(np.asarray(sol.targets, dtype=np.int64), minlength=n)


def eq_balance_residuals(sol: MatchSolution, B: np.ndarray) -> np.ndarray:
    """Pairwise-average imbalance sum m_ij [B(X_i) - B(X_j)] / sum m_ij."""
    s = np.asarray(sol.sources, dtype=np.int64)
    t = np.asarray(sol.targets, dtype=np.int64)
    return (B[s] - B[t]).sum(axis=0) / len(s)


def check_solution(sol: MatchSolution, arms, B: np.ndarray | None = None,
                   delta: np.ndarray | None = None) -> list:
    """List every violated structural or balance condition (empty if valid)."""
    arms = np.asarray(arms)
    problems = []
    s = np.asarray(sol.sources, dtype=np.int64)
    t = np.asarray(sol.targets, dtype=np.int64)
    src_arm = sol.direction.source_arm
    src_units = np.flatnonzero(arms == src_arm)
    per_src = np.bincount(s, minlength=len(arms))
    if np.any(per_src[src_units] != sol.m_value):
        problems.append("some source is not matched exactly M times")
    if np.any(per_src[arms != src_arm] != 0):
        problems.append("a target-arm unit appears as a source")
    if np.any(arms[s] == arms[t]):
        problems.append("same-arm pair")
    if len(set(zip(s.tolist(), t.tolist()))) != len(s):
        problems.append("duplicate pair (m_ij must be binary)")
    if not sol.with_replacement and np.any(np.bincount(t) > 1):
        problems.append("target reused without replacement")
    if B is not None and delta is not None:
        r = eq_balance_residuals(sol, B)
        if not strictly_within(r, np.asarray(delta)):
            problems.append("balance violated")
    return problems
