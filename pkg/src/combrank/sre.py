"""Stratified rank statistics and their worst-case p-values.

Each stratum contributes the mean of transformed normalized ranks among its
treated units, weighted by ``w_s``.  The worst case over a quantile null splits
the budget ``k`` across strata; that split is a multiple-choice knapsack
(:func:`allocate_dp`) for separable objectives and a small integer program
(:func:`allocate_minimax`) when several stratified statistics are combined
through a maximum.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cre import QuantileHypothesis, orient, worst_case_rank_sums
from .lp import TOL as BNB_TOL
from .lp import (
    InfeasibleError,
    MinimaxProblem,
    branch_and_bound,
    dp_all_budgets,
    dp_allocate,
    lp_relaxation,
)
from .nulldist import (
    DEFAULT_CAP,
    DEFAULT_DRAWS,
    EXACT,
    DesignSpec,
    NullDistribution,
    build_null,
)
from .ranks import (
    NORMALIZED,
    RankTransform,
    compute_ranks,
    phi_table,
    rank_ordered_sum,
    sd_phi_uniform,
    transform_moments,
)

SCHEME1 = "scheme1"
SCHEME2 = "scheme2"
CUSTOM = "custom"

SINGLE = "single"
AGGREGATE_THEN_COMBINE = "aggregate_then_combine"
COMBINE_THEN_AGGREGATE = "combine_then_aggregate"

EXACT_SOLVE = "exact"
LP_RELAXATION = "lp_relaxation"
BRUTE_FORCE = "brute_force"
CONSERVATIVE = "conservative_lower_bound"

# below this many allocations the exact minimax solver enumerates directly
BRUTE_LIMIT = 10**5


@dataclass(frozen=True)
class WeightScheme:
    kind: str = SCHEME1
    custom: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in (SCHEME1, SCHEME2, CUSTOM):
            raise ValueError(f"unknown weight scheme {self.kind!r}")
        if self.kind == CUSTOM:
            if not self.custom or any(w < 0 for w in self.custom):
                raise ValueError("custom weights must be a nonempty list of reals >= 0")

    def weights(self, strata) -> np.ndarray:
        n_s = np.array([a for a, _ in strata], dtype=float)
        n_s1 = np.array([b for _, b in strata], dtype=float)
        if self.kind == SCHEME1:
            return n_s1
        if self.kind == SCHEME2:
            return (n_s + 1.0) / (n_s - n_s1)
        if len(self.custom) != len(strata):
            raise ValueError("custom weights do not match the number of strata")
        return np.array(self.custom, dtype=float)


@dataclass(frozen=True)
class StratifiedStatisticSpec:
    """Transforms, weights (one scheme, or one per transform) and combination rule."""

    transforms: tuple[RankTransform, ...]
    weights: tuple[WeightScheme, ...] = (WeightScheme(),)
    combination: str = SINGLE
    single_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "transforms", tuple(self.transforms))
        w = self.weights
        w = (w,) if isinstance(w, WeightScheme) else tuple(w)
        if len(w) == 1:
            w = w * len(self.transforms)
        object.__setattr__(self, "weights", w)
        if not self.transforms:
            raise ValueError("need at least one transform")
        if len(self.weights) != len(self.transforms):
            raise ValueError("need one weight scheme per transform")
        if any(t.domain != NORMALIZED for t in self.transforms):
            raise ValueError("stratified statistics use normalized-rank transforms")
        if self.combination not in (SINGLE, AGGREGATE_THEN_COMBINE, COMBINE_THEN_AGGREGATE):
            raise ValueError(f"unknown combination {self.combination!r}")
        if self.combination == SINGLE and not 0 <= self.single_index < len(self.transforms):
            raise ValueError("single_index out of range")
        if self.combination == COMBINE_THEN_AGGREGATE and len(set(self.weights)) != 1:
            raise ValueError("combine_then_aggregate needs one weight scheme shared by all transforms")

    @property
    def H(self) -> int:
        return len(self.transforms)

    def weight_matrix(self, strata) -> np.ndarray:
        """``(S, H)`` weights."""
        return np.column_stack([w.weights(strata) for w in self.weights])


@dataclass(frozen=True)
class DesignMoments:
    """Per-stratum and aggregated moments used for standardization."""

    mu_s: np.ndarray  # (S, H)
    sigma_s: np.ndarray  # (S, H)
    sd_u: np.ndarray  # (H,)
    mu: np.ndarray  # (H,) of the weighted sum
    sigma: np.ndarray  # (H,)


def design_moments(spec: StratifiedStatisticSpec, strata) -> DesignMoments:
    mom = [[transform_moments(t, a, b) for t in spec.transforms] for a, b in strata]
    mu_s = np.array([[m.mu_s for m in row] for row in mom])
    sigma_s = np.array([[m.sigma_s for m in row] for row in mom])
    W = spec.weight_matrix(strata)
    mu = np.sum(W * mu_s, axis=0)
    sigma = np.sqrt(np.sum(W**2 * sigma_s**2, axis=0))
    sd_u = np.array([sd_phi_uniform(t) for t in spec.transforms])
    return DesignMoments(mu_s, sigma_s, sd_u, mu, sigma)


def sd_phi_standardize(values, mu_s, sd_u) -> np.ndarray:
    """``max_h (t_s^h - mu_s^h) / sd(phi_h(U))`` along the last axis."""
    sd_u = np.asarray(sd_u, dtype=float)
    if np.any(sd_u <= 0):
        raise ValueError("degenerate statistic in combination: sd of phi(U) is zero")
    return np.max((np.asarray(values, float) - np.asarray(mu_s, float)) / sd_u, axis=-1)


# -- statistics ------------------------------------------------------------


def _slices(strata):
    out, start = [], 0
    for a, _ in strata:
        out.append(slice(start, start + a))
        start += a
    return out


def stratum_means(Z, y, strata, transforms) -> np.ndarray:
    """``(draws, S, H)`` array of ``(1/n_s1) sum_i z_i phi(r_i / (n_s + 1))``.

    Units are laid out stratum by stratum as in :class:`DesignSpec`.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    y = np.asarray(y, dtype=float)
    out = np.empty((Z.shape[0], len(strata), len(transforms)))
    for s, (sl, (n_s, n_s1)) in enumerate(zip(_slices(strata), strata)):
        if n_s1 == 0:
            raise ValueError("stratum without treated units")
        r = compute_ranks(y[sl])
        for h, t in enumerate(transforms):
            out[:, s, h] = rank_ordered_sum(Z[:, sl], r, phi_table(t, n_s)) / n_s1
    return out


def combine_means(M, spec: StratifiedStatisticSpec, strata, moments: DesignMoments | None = None):
    """Reduce stratum means ``(draws, S, H)`` to the spec's scalar statistic."""
    W = spec.weight_matrix(strata)
    if spec.combination == SINGLE:
        h = spec.single_index
        tot = np.zeros(M.shape[0])
        for s in range(M.shape[1]):
            tot = tot + W[s, h] * M[:, s, h]
        return tot
    moments = moments or design_moments(spec, strata)
    if spec.combination == COMBINE_THEN_AGGREGATE:
        per = sd_phi_standardize(M, moments.mu_s, moments.sd_u)
        tot = np.zeros(M.shape[0])
        for s in range(M.shape[1]):
            tot = tot + W[s, 0] * per[:, s]
        return tot
    if np.any(moments.sigma <= 0):
        raise ValueError("degenerate statistic in combination")
    tot = np.zeros((M.shape[0], spec.H))
    for s in range(M.shape[1]):
        tot = tot + W[s] * M[:, s, :]
    return np.max((tot - moments.mu) / moments.sigma, axis=1)


@dataclass(frozen=True)
class StratifiedStatistic:
    spec: StratifiedStatisticSpec
    strata: tuple[tuple[int, int], ...]

    def evaluate(self, Z, y):
        M = stratum_means(Z, y, self.strata, self.spec.transforms)
        return combine_means(M, self.spec, self.strata)


def stratified_statistic(z, y, spec: StratifiedStatisticSpec, strata, per_h: bool = False):
    """Observed statistic; with ``per_h`` the weighted sums for every transform."""
    M = stratum_means(z, y, strata, spec.transforms)
    if per_h:
        W = spec.weight_matrix(strata)
        tot = np.zeros(spec.H)
        for s in range(M.shape[1]):
            tot = tot + W[s] * M[0, s, :]
        return tot
    return float(combine_means(M, spec, strata)[0])


def build_sre_null(spec: StratifiedStatisticSpec, d: DesignSpec, mode=EXACT, draws=DEFAULT_DRAWS,
                   seed=0, cap=DEFAULT_CAP) -> NullDistribution:
    return build_null(StratifiedStatistic(spec, d.strata), d, mode=mode, draws=draws, seed=seed, cap=cap)


# -- worst-case tables and allocation ---------------------------------------


@dataclass(frozen=True)
class InfimumTable:
    """``rows[s][j, h]``: minimal stratum mean for transform ``h`` with ``j`` units at most ``c``."""

    rows: tuple[np.ndarray, ...]
    c: float

    @property
    def capacities(self) -> np.ndarray:
        return np.array([r.shape[0] - 1 for r in self.rows])


def build_infimum_table(z, y, strata, c: float, transforms) -> InfimumTable:
    """Per-stratum worst-case means for every ``j = 0..n_s1`` (units laid out by stratum)."""
    if not np.isfinite(c):
        raise ValueError("threshold c must be finite")
    z = np.asarray(z, dtype=np.int8)
    y = np.asarray(y, dtype=float)
    rows = []
    for sl, (n_s, n_s1) in zip(_slices(strata), strata):
        if n_s1 == 0:
            raise ValueError("stratum without treated units")
        rows.append(worst_case_rank_sums(z[sl], y[sl], c, transforms) / n_s1)
    return InfimumTable(tuple(rows), float(c))


@dataclass(frozen=True)
class AllocationResult:
    objective: float
    allocation: tuple[int, ...]
    exactness: str = EXACT
    # the true minimum may lie up to ``slack`` below ``objective`` (branch-and-bound cut tolerance)
    slack: float = 0.0


def allocate_dp(values, k: int) -> AllocationResult:
    """Exact minimum of ``sum_s values[s][k_s]`` subject to ``sum_s k_s = k``."""
    obj, alloc = dp_allocate(values, k)
    return AllocationResult(obj, tuple(int(a) for a in alloc), EXACT)


def separable_values(table: InfimumTable, spec: StratifiedStatisticSpec, strata,
                     moments: DesignMoments | None = None) -> list[np.ndarray]:
    """Per-stratum value tables of a separable spec (single or combine-then-aggregate)."""
    W = spec.weight_matrix(strata)
    if spec.combination == SINGLE:
        h = spec.single_index
        return [W[s, h] * r[:, h] for s, r in enumerate(table.rows)]
    if spec.combination == COMBINE_THEN_AGGREGATE:
        moments = moments or design_moments(spec, strata)
        return [W[s, 0] * sd_phi_standardize(r, moments.mu_s[s], moments.sd_u)
                for s, r in enumerate(table.rows)]
    raise ValueError("aggregate_then_combine is not separable across strata")


def minimax_problem(table: InfimumTable, spec: StratifiedStatisticSpec, strata,
                    moments: DesignMoments | None = None) -> MinimaxProblem:
    if spec.combination != AGGREGATE_THEN_COMBINE:
        return MinimaxProblem.separable(separable_values(table, spec, strata, moments))
    moments = moments or design_moments(spec, strata)
    W = spec.weight_matrix(strata)
    vals = tuple(W[s] * r for s, r in enumerate(table.rows))
    return MinimaxProblem(vals, moments.mu, moments.sigma)


def allocate_minimax(problem: MinimaxProblem, k: int, mode: str = EXACT_SOLVE) -> AllocationResult:
    """Minimize ``max_h (sum_s V_s[k_s, h] - mu_h) / sigma_h`` over allocations summing to ``k``."""
    cap = problem.capacities
    if not 0 <= k <= cap.sum():
        raise InfeasibleError(f"budget k={k} outside 0..{cap.sum()}")
    if mode == LP_RELAXATION:
        val, _ = lp_relaxation(problem, k)
        # the simplex optimum can sit a rounding error above the true relaxation
        val -= 1e-9 * (1.0 + abs(val))
        return AllocationResult(val, (), CONSERVATIVE)
    if mode == BRUTE_FORCE or (mode == EXACT_SOLVE and math.prod(int(c) + 1 for c in cap) <= BRUTE_LIMIT):
        return _brute_minimax(problem, k)
    if mode != EXACT_SOLVE:
        raise ValueError(f"unknown solver mode {mode!r}")
    if problem.mu.size == 1:
        # separable: dynamic programming is exact and much cheaper
        vals = [v[:, 0] for v in problem.values]
        _, alloc = dp_allocate(vals, k)
        return AllocationResult(problem.objective(alloc), tuple(int(a) for a in alloc), EXACT)
    res = branch_and_bound(problem, k)
    return AllocationResult(res.objective, tuple(int(a) for a in res.allocation), EXACT,
                            slack=BNB_TOL * (1.0 + abs(res.objective)))


def _brute_minimax(problem: MinimaxProblem, k: int) -> AllocationResult:
    best, arg = np.inf, None
    for alloc in itertools.product(*(range(int(c) + 1) for c in problem.capacities)):
        if sum(alloc) != k:
            continue
        v = problem.objective(alloc)
        if v < best:
            best, arg = v, alloc
    return AllocationResult(float(best), tuple(arg), EXACT)


# -- p-values ---------------------------------------------------------------


@dataclass(frozen=True)
class StratifiedData:
    """Units reordered stratum by stratum, with degenerate strata split off."""

    z: np.ndarray
    y: np.ndarray
    design: DesignSpec  # active strata only
    order: np.ndarray  # original indices of the active units, in layout order
    excluded_treated: int

    @classmethod
    def from_labels(cls, z, y, strata_labels, warn: bool = True) -> "StratifiedData":
        z = np.asarray(z, dtype=np.int8)
        y = np.asarray(y, dtype=float)
        labels = np.asarray(strata_labels)
        if not (z.size == y.size == labels.size):
            raise ValueError("assignment, outcome and stratum vectors must have the same length")
        idx, sizes, excluded = [], [], 0
        for lab in sorted(set(labels.tolist()), key=lambda v: (str(type(v)), v)):
            members = np.flatnonzero(labels == lab)
            n1 = int(z[members].sum())
            if n1 == 0 or n1 == members.size:
                if warn:
                    warnings.warn(
                        f"stratum {lab!r} has no {'treated' if n1 == 0 else 'control'} units; "
                        "excluded from the statistic",
                        stacklevel=2,
                    )
                excluded += n1
                continue
            idx.append(members)
            sizes.append((members.size, n1))
        if not sizes:
            raise ValueError("no stratum has both treated and control units")
        order = np.concatenate(idx)
        return cls(z[order], y[order], DesignSpec(tuple(sizes)), order, excluded)

    @classmethod
    def contiguous(cls, z, y, d: DesignSpec) -> "StratifiedData":
        z = np.asarray(z, dtype=np.int8)
        y = np.asarray(y, dtype=float)
        d.check_active()
        if z.size != d.n or any(int(z[sl].sum()) != b for sl, (_, b) in zip(_slices(d.strata), d.strata)):
            raise ValueError("data do not match the design")
        return cls(z, y, d, np.arange(z.size), 0)

    @property
    def n1(self) -> int:
        return self.design.n1 + self.excluded_treated

    def active_k(self, k: int) -> int:
        """Budget left for active strata: excluded treated units are all placed at or below ``c``."""
        if not 0 <= k <= self.n1:
            raise ValueError(f"k={k} outside 0..{self.n1}")
        return max(0, k - self.excluded_treated)


@dataclass
class SRETest:
    """Stratified test with its null law, evaluated at one or all ``k``."""

    spec: StratifiedStatisticSpec
    design: DesignSpec
    null: NullDistribution
    solver: str = EXACT_SOLVE
    moments: DesignMoments | None = None
    _problems: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def build(cls, spec, design: DesignSpec, mode=EXACT, draws=DEFAULT_DRAWS, seed=0,
              cap=DEFAULT_CAP, solver=EXACT_SOLVE) -> "SRETest":
        moments = design_moments(spec, design.strata) if spec.combination != SINGLE else None
        if spec.combination == AGGREGATE_THEN_COMBINE and np.any(moments.sigma <= 0):
            raise ValueError("degenerate statistic in combination")
        nd = build_sre_null(spec, design, mode, draws, seed, cap)
        return cls(spec, design, nd, solver, moments)

    @property
    def exactness(self) -> str:
        if self.solver == LP_RELAXATION and self.spec.combination == AGGREGATE_THEN_COMBINE:
            return f"{self.null.mode}+lp_relaxation"
        return self.null.mode

    def problem(self, data: StratifiedData, c: float) -> MinimaxProblem:
        """Allocation problem at threshold ``c``; cached because inversion revisits each ``c`` for many ``k``."""
        key = (id(data), float(c))
        if key not in self._problems:
            if len(self._problems) > 512:
                self._problems.clear()
            table = build_infimum_table(data.z, data.y, self.design.strata, c, self.spec.transforms)
            self._problems[key] = minimax_problem(table, self.spec, self.design.strata, self.moments)
        return self._problems[key]

    def _uses_bnb(self, prob: MinimaxProblem) -> bool:
        return (self.spec.combination == AGGREGATE_THEN_COMBINE and self.solver == EXACT_SOLVE
                and math.prod(int(m) + 1 for m in prob.capacities) > BRUTE_LIMIT)

    def exceeds(self, data: StratifiedData, k: int, c: float, alpha: float) -> bool:
        """Whether the p-value exceeds ``alpha``, deciding without a full optimization when possible."""
        prob = self.problem(data, c)
        if not self._uses_bnb(prob):
            return self.pvalue(data, k, c) > alpha

        def accept(x):
            return self.null.tail(x - BNB_TOL * (1.0 + abs(x))) > alpha

        return accept(branch_and_bound(prob, data.active_k(k), accept=accept).objective)

    def optimized_statistic(self, data: StratifiedData, k: int, c: float) -> AllocationResult:
        prob = self.problem(data, c)
        kk = data.active_k(k)
        if self.spec.combination != AGGREGATE_THEN_COMBINE and self.solver != BRUTE_FORCE:
            return allocate_dp([v[:, 0] for v in prob.values], kk)
        return allocate_minimax(prob, kk, self.solver)

    def pvalue(self, data: StratifiedData, k: int, c: float) -> float:
        res = self.optimized_statistic(data, k, c)
        return self.null.tail(res.objective - res.slack)

    def pvalues_all_k(self, data: StratifiedData, c: float) -> np.ndarray:
        """p-values for ``k = 0..n1`` at threshold ``c``."""
        if self.spec.combination == AGGREGATE_THEN_COMBINE or self.solver == BRUTE_FORCE:
            return np.array([self.pvalue(data, k, c) for k in range(data.n1 + 1)])
        table = build_infimum_table(data.z, data.y, self.design.strata, c, self.spec.transforms)
        vals = separable_values(table, self.spec, self.design.strata, self.moments)
        f = dp_all_budgets(vals)
        ks = np.array([data.active_k(k) for k in range(data.n1 + 1)])
        return np.atleast_1d(self.null.tail(f[ks]))


def pvalue_sre(z, y, strata_labels, spec: StratifiedStatisticSpec, h: QuantileHypothesis,
               nd: NullDistribution, solver: str = EXACT_SOLVE) -> float:
    """Worst-case p-value of ``h`` for a stratified experiment.

    ``nd`` must be the null law of ``spec`` under the active-strata design
    (units laid out stratum by stratum in sorted label order).
    """
    z, y, k, c = orient(z, y, h)
    data = StratifiedData.from_labels(z, y, strata_labels)
    moments = design_moments(spec, data.design.strata) if spec.combination != SINGLE else None
    test = SRETest(spec, data.design, nd, solver, moments)
    return test.pvalue(data, k, c)
