"""Simultaneous lower bounds for effect quantiles by inverting p-values over ``c``.

p-values are step functions of ``c``: within-stratum ranks of the imputed
outcomes ``y_i - c`` only change when ``c`` crosses a difference
``y_i - y_j`` between a treated unit and a unit of its stratum.  Searching the
candidate differences, the midpoints between them and one point beyond each end
therefore finds ``inf{c : p > alpha}`` and whether it is attained.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .cre import CONTROL, TREATED, CRETest, flip_problem
from .sre import SRETest, StratifiedData

ALL = "all"
OPEN = "open"
CLOSED = "closed"


class InversionError(RuntimeError):
    pass


class QuantileProblem(Protocol):
    """A dataset in treated/greater form with a test attached."""

    n1: int
    batched: bool  # True when pvalues_all_k costs about as much as one pvalue

    def pvalue(self, k: int, c: float) -> float: ...

    def pvalues_all_k(self, c: float) -> np.ndarray: ...

    def candidates(self) -> np.ndarray: ...


def candidate_breakpoints(z, y, strata=None) -> np.ndarray:
    """Sorted distinct differences ``y_i - y_j`` with ``i`` treated and ``j`` in ``i``'s stratum."""
    z = np.asarray(z)
    y = np.asarray(y, dtype=float)
    labels = np.zeros(z.size, dtype=int) if strata is None else np.asarray(strata)
    out = []
    for lab in np.unique(labels):
        members = labels == lab
        t = y[members & (z == 1)]
        out.append((t[:, None] - y[members][None, :]).ravel())
    return np.unique(np.concatenate(out)) if out else np.empty(0)


def search_points(candidates) -> np.ndarray:
    """``[below, c_0, mid_01, c_1, ..., c_last, above]``."""
    c = np.asarray(candidates, dtype=float)
    if c.size == 0:
        return np.array([0.0])
    pts = np.empty(2 * c.size + 1)
    pts[1::2] = c
    pts[2:-1:2] = (c[:-1] + c[1:]) / 2.0
    span = max(1.0, c[-1] - c[0])
    pts[0] = c[0] - span
    pts[-1] = c[-1] + span
    return pts


def _resolve(points, idx: int, p: float) -> tuple[float, str, float]:
    if idx == 0:
        return -np.inf, OPEN, p
    if idx % 2 == 1:
        return float(points[idx]), CLOSED, p
    return float(points[idx - 1]), OPEN, p


def invert_quantile(pfun, k: int, alpha: float, candidates) -> tuple[float, str, float]:
    """Infimum of ``{c : pfun(k, c) > alpha}`` with its endpoint type and the p-value there.

    ``pfun`` must be nondecreasing in ``c`` and constant between candidates.
    """
    pts = search_points(candidates)
    lo, hi = 0, pts.size - 1
    p_hi = pfun(k, pts[hi])
    if not p_hi > alpha:
        raise InversionError("inversion failed above candidate range")
    p_lo = pfun(k, pts[lo])
    if p_lo > alpha:
        return -np.inf, OPEN, p_lo
    # invariant: p(lo) <= alpha < p(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        p_mid = pfun(k, pts[mid])
        if p_mid > alpha:
            hi, p_hi = mid, p_mid
        else:
            lo = mid
    bound, endpoint, _ = _resolve(pts, hi, p_hi)
    p_at = p_hi if endpoint == CLOSED else pfun(k, bound)
    return bound, endpoint, p_at


@dataclass(frozen=True)
class BoundsTable:
    """Lower bounds for the ``k``-th smallest effect, ``k = 1..m``."""

    bounds: np.ndarray
    endpoints: tuple[str, ...]
    p_at_bound: np.ndarray
    group: str
    level: float

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.bounds.size + 1)

    def __len__(self):
        return self.bounds.size

    def is_nested(self) -> bool:
        b = self.bounds
        return bool(np.all(b[1:] >= b[:-1]))


def simultaneous_bounds_from_problem(problem: QuantileProblem, alpha: float, group: str = TREATED) -> BoundsTable:
    """Bounds for every ``k = 1..n1`` of an oriented problem.

    The first search point where ``p_k > alpha`` is nondecreasing in ``k``, so
    the ``k`` range is split recursively and each half searches only the
    points the other half left open.
    """
    m = problem.n1
    pts = search_points(problem.candidates())
    cache: dict[int, np.ndarray] = {}

    decide = getattr(problem, "exceeds", None)
    decisions: dict[tuple[int, int], bool] = {}

    def above(k, q):
        if problem.batched or decide is None:
            return pk(k, q) > alpha
        if (k, q) not in decisions:
            decisions[(k, q)] = bool(decide(k, pts[q], alpha))
        return decisions[(k, q)]

    def pk(k, q):
        if problem.batched:
            if q not in cache:
                cache[q] = np.asarray(problem.pvalues_all_k(pts[q]))
            return float(cache[q][k])
        key = (k, q)
        if key not in cache:
            cache[key] = problem.pvalue(k, pts[q])
        return float(cache[key])

    first = np.zeros(m + 1, dtype=int)
    last = pts.size - 1

    def solve(k_lo, k_hi, q_lo, q_hi):
        if k_lo > k_hi:
            return
        k = (k_lo + k_hi) // 2
        lo, hi = q_lo, q_hi
        if not above(k, hi):
            if hi == last:
                raise InversionError("inversion failed above candidate range")
            hi = last  # only reachable if monotonicity in k fails numerically
            if not above(k, hi):
                raise InversionError("inversion failed above candidate range")
        if above(k, lo):
            q = lo
        else:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if above(k, mid):
                    hi = mid
                else:
                    lo = mid
            q = hi
        first[k] = q
        solve(k_lo, k - 1, q_lo, q)
        solve(k + 1, k_hi, q, q_hi)

    solve(1, m, 0, last)
    bounds, ends, ps = np.empty(m), [], np.empty(m)
    for k in range(1, m + 1):
        b, e, _ = _resolve(pts, int(first[k]), 0.0)
        bounds[k - 1] = b
        ends.append(e)
        if e == OPEN and np.isfinite(b):
            ps[k - 1] = pk(k, int(first[k]) - 1)
        else:
            ps[k - 1] = pk(k, int(first[k]))
    return BoundsTable(bounds, tuple(ends), ps, group, 1.0 - alpha)


@dataclass
class CREProblem:
    test: CRETest
    z: np.ndarray
    y: np.ndarray
    batched: bool = True

    @property
    def n1(self) -> int:
        return int(np.sum(self.z))

    def pvalue(self, k, c):
        return self.test.pvalue(self.z, self.y, k, c)

    def pvalues_all_k(self, c):
        return self.test.pvalues_all_k(self.z, self.y, c)

    def candidates(self):
        return candidate_breakpoints(self.z, self.y)


@dataclass
class SREProblem:
    test: SRETest
    data: StratifiedData

    @property
    def batched(self) -> bool:
        from .sre import AGGREGATE_THEN_COMBINE, BRUTE_FORCE

        return self.test.spec.combination != AGGREGATE_THEN_COMBINE and self.test.solver != BRUTE_FORCE

    @property
    def n1(self) -> int:
        return self.data.n1

    def pvalue(self, k, c):
        return self.test.pvalue(self.data, k, c)

    def pvalues_all_k(self, c):
        return self.test.pvalues_all_k(self.data, c)

    def exceeds(self, k, c, alpha):
        return self.test.exceeds(self.data, k, c, alpha)

    def candidates(self):
        labels = self.data.design.labels()
        return candidate_breakpoints(self.data.z, self.data.y, labels)


def simultaneous_bounds(problem: QuantileProblem, alpha: float, group: str = TREATED) -> BoundsTable:
    """Lower prediction bounds for all ``k``; ``problem`` must already be oriented for ``group``."""
    if group not in (TREATED, CONTROL):
        raise ValueError("group must be treated or control; pool two tables for all units")
    return simultaneous_bounds_from_problem(problem, alpha, group)


def pool_confidence(treated: BoundsTable, control: BoundsTable, n: int | None = None) -> BoundsTable:
    """Sort the union of treated and control bounds into nested all-unit bounds."""
    if treated.group != TREATED or control.group != CONTROL:
        raise ValueError("pool a treated table with a control table")
    if not np.isclose(treated.level, control.level):
        raise ValueError("tables have different levels")
    if n is not None and len(treated) + len(control) != n:
        raise ValueError("table sizes do not match the design")
    b = np.concatenate([treated.bounds, control.bounds])
    ends = treated.endpoints + control.endpoints
    ps = np.concatenate([treated.p_at_bound, control.p_at_bound])
    # at equal bounds a closed interval is the larger one, so it comes first
    key_open = np.array([e == OPEN for e in ends])
    order = np.lexsort((key_open, b))
    alpha = 1.0 - treated.level
    return BoundsTable(b[order], tuple(ends[i] for i in order), ps[order], ALL, 1.0 - 2.0 * alpha)


__all__ = [
    "ALL",
    "BoundsTable",
    "CLOSED",
    "CREProblem",
    "InversionError",
    "OPEN",
    "SREProblem",
    "candidate_breakpoints",
    "flip_problem",
    "invert_quantile",
    "pool_confidence",
    "search_points",
    "simultaneous_bounds",
]
