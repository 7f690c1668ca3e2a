"""Brute-force reference implementations for the test suite.

Nothing in the package imports this module; everything here is exponential
and deliberately written without the shortcuts the production code relies on.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .nulldist import NullDistribution
from .ranks import compute_ranks, phi_table

ORACLE_CAP = 10**6


@dataclass
class OracleReport:
    case: str
    production: float
    oracle: float
    context: dict = field(default_factory=dict)

    @property
    def equal(self) -> bool:
        return self.production == self.oracle


def rank_sum(z, y, t) -> float:
    """Plain-loop transformed rank sum."""
    r = compute_ranks(y)
    phi = phi_table(t, len(y))
    return float(sum(phi[r[i] - 1] for i in range(len(y)) if z[i] == 1))


def brute_infimum_cre(z, y, k: int, c: float, t) -> float:
    """Minimum rank sum over every placement of at most ``n1 - k`` infinite effects.

    Treated units outside the chosen subset get effect ``c``.
    """
    z = np.asarray(z)
    y = np.asarray(y, dtype=float)
    treated = [i for i in range(len(z)) if z[i] == 1]
    if len(treated) > 12:
        raise ValueError("oracle limited to n1 <= 12")
    if not 0 <= k <= len(treated):
        raise ValueError("k outside 0..n1")
    best = math.inf
    for size in range(len(treated) - k + 1):
        for subset in itertools.combinations(treated, size):
            y0 = y.copy()
            for i in treated:
                y0[i] = -math.inf if i in subset else y[i] - c
            best = min(best, rank_sum(z, y0, t))
    return best


def brute_infimum_by_budget(z, y, c: float, t) -> np.ndarray:
    """``brute_infimum_cre`` for every ``k = 0..n1`` from one pass over all subsets."""
    z = np.asarray(z)
    y = np.asarray(y, dtype=float)
    treated = [i for i in range(len(z)) if z[i] == 1]
    if len(treated) > 12:
        raise ValueError("oracle limited to n1 <= 12")
    by_size = [math.inf] * (len(treated) + 1)
    for size in range(len(treated) + 1):
        for subset in itertools.combinations(treated, size):
            y0 = y.copy()
            for i in treated:
                y0[i] = -math.inf if i in subset else y[i] - c
            by_size[size] = min(by_size[size], rank_sum(z, y0, t))
    # k needs at least k treated units at or below c, so at most n1 - k infinite effects
    n1 = len(treated)
    return np.array([min(by_size[: n1 - k + 1]) for k in range(n1 + 1)])


def brute_allocation_sre(tables, k: int, objective) -> float:
    """Minimum of ``objective(alloc)`` over all allocations with ``sum(alloc) == k``.

    ``tables`` only supplies the per-stratum capacities (``len(table) - 1``).
    """
    caps = [len(t) - 1 for t in tables]
    if math.prod(c + 1 for c in caps) > ORACLE_CAP:
        raise ValueError("too many allocations for the oracle")
    best = math.inf
    for alloc in itertools.product(*(range(c + 1) for c in caps)):
        if sum(alloc) == k:
            best = min(best, objective(alloc))
    return best


def separable_objective(values):
    """``alloc -> sum_s values[s][alloc[s]]`` summed left to right."""

    def f(alloc):
        tot = 0.0
        for v, j in zip(values, alloc):
            tot = tot + float(v[j])
        return tot

    return f


def minimax_objective(values, mu, sigma):
    """``alloc -> max_h (sum_s values[s][alloc[s], h] - mu_h) / sigma_h``."""

    def f(alloc):
        tot = np.zeros(len(mu))
        for v, j in zip(values, alloc):
            tot = tot + np.asarray(v)[j]
        return float(np.max((tot - np.asarray(mu)) / np.asarray(sigma)))

    return f


def all_assignments(strata):
    """Every assignment vector of a stratified design via ``itertools``."""
    per = []
    for n_s, n_s1 in strata:
        per.append([tuple(1 if i in c else 0 for i in range(n_s))
                    for c in itertools.combinations(range(n_s), n_s1)])
    if math.prod(len(p) for p in per) > ORACLE_CAP:
        raise ValueError("too many assignments for the oracle")
    for parts in itertools.product(*per):
        yield np.array([v for part in parts for v in part], dtype=np.int8)


def brute_null(statistic, strata, y) -> NullDistribution:
    """Exact null law by evaluating ``statistic(z, y)`` on every assignment."""
    return NullDistribution(np.array([statistic(z, y) for z in all_assignments(strata)]))


def brute_tail(values, c) -> float:
    """``P(T >= c)`` counted one value at a time."""
    return sum(1 for v in values if v >= c) / len(values)
