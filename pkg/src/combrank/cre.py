"""Rank-sum tests for effect quantiles in completely randomized experiments.

All hypotheses are reduced to the treated-group, "greater" form
``H: tau_1(k) <= c``: control-group hypotheses go through :func:`flip_problem`
and upper-tail hypotheses through outcome negation (see :func:`orient`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nulldist import (
    DEFAULT_CAP,
    DEFAULT_DRAWS,
    EXACT,
    DesignSpec,
    NullDistribution,
    build_null,
    evaluate_chunked,
    null_assignments,
)
from .ranks import RankTransform, compute_ranks, phi_table, rank_ordered_sum, rank_rows, transform_moments

TREATED = "treated"
CONTROL = "control"
GREATER = "greater"
LESS = "less"


class DegenerateStatisticError(ValueError):
    pass


@dataclass(frozen=True)
class QuantileHypothesis:
    """``tau_g(k) <= c`` (direction ``greater``) or ``tau_g(k) >= c`` (``less``)."""

    k: int
    c: float
    group: str = TREATED
    direction: str = GREATER

    def __post_init__(self):
        if self.group not in (TREATED, CONTROL):
            raise ValueError(f"unknown group {self.group!r}")
        if self.direction not in (GREATER, LESS):
            raise ValueError(f"unknown direction {self.direction!r}")


def flip_problem(z, y):
    """Swap treatment labels and negate outcomes; an involution."""
    z = np.asarray(z)
    return (1 - z).astype(z.dtype), -np.asarray(y, dtype=float)


def orient(z, y, h: QuantileHypothesis):
    """Map ``(z, y, h)`` to an equivalent treated/greater problem ``(z, y, k, c)``."""
    z = np.asarray(z, dtype=np.int8)
    y = np.asarray(y, dtype=float)
    k, c = h.k, h.c
    if h.group == CONTROL:
        z, y = flip_problem(z, y)
    if h.direction == LESS:
        # tau_(k) >= c  <=>  (-tau)_(m+1-k) <= -c  among the m units of the group
        m = int(z.sum())
        if not 1 <= k <= m:
            raise ValueError(f"k={k} outside 1..{m} for an upper-tail hypothesis")
        y, k, c = -y, m + 1 - k, -c
    return z, y, k, c


def _check_zy(z, y):
    z = np.asarray(z)
    y = np.asarray(y, dtype=float)
    if z.shape != y.shape or z.ndim != 1:
        raise ValueError("assignment and outcome vectors must have the same length")
    if not np.isin(z, (0, 1)).all():
        raise ValueError("assignment must be 0/1")
    return z.astype(np.int8), y


@dataclass(frozen=True)
class RankSumStatistic:
    """``t(z, y) = sum_i z_i phi(r_i(y))``."""

    transform: RankTransform

    def evaluate(self, Z, y):
        y = np.asarray(y, dtype=float)
        out = rank_ordered_sum(Z, compute_ranks(y), phi_table(self.transform, y.size))
        return out if np.ndim(Z) == 2 else out[0]


def rank_sum_statistic(z, y, t: RankTransform) -> float:
    z, y = _check_zy(z, y)
    return float(RankSumStatistic(t).evaluate(z, y))


@dataclass(frozen=True)
class ImputationVector:
    """Hypothesized effects; ``+inf`` marks the treated units allowed to exceed ``c``."""

    delta: np.ndarray

    @property
    def n_infinite(self) -> int:
        return int(np.isinf(self.delta).sum())


def imputed_outcomes(z, y, delta) -> np.ndarray:
    """Imputed control outcomes ``y - z * delta`` with ``y - inf = -inf``."""
    return np.where(np.asarray(z) == 1, np.asarray(y, float) - np.asarray(delta, float), y)


def worst_case_imputation(z, y, h: QuantileHypothesis) -> ImputationVector:
    """Effect vector minimizing every nondecreasing rank-sum statistic under ``h``.

    The ``n1 - k`` treated units with the largest observed ranks get ``+inf``;
    every other unit gets ``c``.  ``h`` must already be in treated/greater form.
    """
    if h.group != TREATED or h.direction != GREATER:
        raise ValueError("orient the hypothesis before imputing")
    z, y = _check_zy(z, y)
    n1 = int(z.sum())
    if not 0 <= h.k <= n1:
        raise ValueError(f"k={h.k} outside 0..{n1}")
    delta = np.full(y.size, float(h.c))
    treated = np.flatnonzero(z)
    ranks = compute_ranks(y)
    top = treated[np.argsort(-ranks[treated], kind="stable")][: n1 - h.k]
    delta[top] = np.inf
    return ImputationVector(delta)


def worst_case_outcomes_all_k(z, y, c: float) -> np.ndarray:
    """Imputed outcome vectors for every ``k = 0..n1`` (row ``k``) at threshold ``c``."""
    z, y = _check_zy(z, y)
    treated = np.flatnonzero(z)
    n1 = treated.size
    ranks = compute_ranks(y)
    desc = treated[np.argsort(-ranks[treated], kind="stable")]
    base = np.where(z == 1, y - c, y)
    Y = np.tile(base, (n1 + 1, 1))
    slot = np.arange(n1)[None, :] < (n1 - np.arange(n1 + 1))[:, None]
    Y[:, desc] = np.where(slot, -np.inf, base[desc])
    return Y


def worst_case_rank_sums(z, y, c: float, transforms) -> np.ndarray:
    """Minimal rank sums ``(n1 + 1, H)`` over the null set, for every ``k``."""
    z = np.asarray(z, dtype=np.int8)
    R = rank_rows(worst_case_outcomes_all_k(z, y, c))
    Z = np.broadcast_to(z.astype(float), R.shape)
    return np.column_stack([rank_ordered_sum(Z, R, phi_table(t, z.size)) for t in transforms])


def pvalue_single(z, y, h: QuantileHypothesis, t: RankTransform, nd: NullDistribution) -> float:
    z, y, k, c = orient(z, y, h)
    xi = worst_case_imputation(z, y, QuantileHypothesis(k, c))
    return nd.tail(rank_sum_statistic(z, imputed_outcomes(z, y, xi.delta), t))


# -- combinations -----------------------------------------------------------


@dataclass(frozen=True)
class MinPStatistic:
    """``tbar = min_h G_h(t_h)``; small values are extreme."""

    transforms: tuple[RankTransform, ...]
    marginals: tuple[NullDistribution, ...]

    def components(self, Z, y):
        return np.column_stack([RankSumStatistic(t).evaluate(Z, y) for t in self.transforms])

    def from_components(self, T):
        T = np.atleast_2d(T)
        return np.min(np.column_stack([g.tail(T[:, i]) for i, g in enumerate(self.marginals)]), axis=1)

    def evaluate(self, Z, y):
        return self.from_components(self.components(Z, y))


@dataclass(frozen=True)
class NegTbarStatistic:
    """``-tbar``: the min-p combination recast as a larger-is-extreme statistic."""

    inner: MinPStatistic

    def evaluate(self, Z, y):
        return -self.inner.evaluate(Z, y)


@dataclass(frozen=True)
class MaxStdStatistic:
    """``max_h (t_h - mu_h) / sigma_h`` with exact randomization moments."""

    transforms: tuple[RankTransform, ...]
    mu: tuple[float, ...]
    sigma: tuple[float, ...]

    def __post_init__(self):
        if any(s <= 0 for s in self.sigma):
            raise DegenerateStatisticError("degenerate statistic in combination")

    @classmethod
    def for_design(cls, transforms, n: int, n1: int) -> "MaxStdStatistic":
        mu, sigma = zip(*(cre_moments(t, n, n1) for t in transforms))
        return cls(tuple(transforms), mu, sigma)

    def from_components(self, T):
        T = np.atleast_2d(T)
        return np.max((T - np.asarray(self.mu)) / np.asarray(self.sigma), axis=1)

    def evaluate(self, Z, y):
        T = np.column_stack([RankSumStatistic(t).evaluate(Z, y) for t in self.transforms])
        return self.from_components(T)


def cre_moments(t: RankTransform, n: int, n1: int) -> tuple[float, float]:
    """Mean and sd of the (unnormalized) rank sum under a CRE."""
    m = transform_moments(t, n, n1)
    return n1 * m.mu_s, n1 * m.sigma_s


@dataclass(frozen=True)
class JointNull:
    """Marginal laws ``G_h`` plus the laws of ``tbar`` and ``-tbar``.

    In Monte Carlo mode the marginals come from their own calibration draws,
    so ``tbar`` is a fixed statistic when its law is estimated from the main
    draws.  In exact mode both use the full enumeration.
    """

    marginals: tuple[NullDistribution, ...]
    tbar: NullDistribution
    neg_tbar: NullDistribution

    @property
    def statistic(self) -> MinPStatistic:
        return MinPStatistic(tuple(), self.marginals)


def build_joint_null(
    transforms,
    d: DesignSpec,
    mode: str = EXACT,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
) -> JointNull:
    transforms = tuple(transforms)
    y = np.arange(d.n, dtype=float)
    Z = null_assignments(d, mode, draws, seed, cap)
    T = np.column_stack([evaluate_chunked(RankSumStatistic(t), Z, y) for t in transforms])
    if mode == EXACT:
        T_cal = T
    else:
        Zc = null_assignments(d, mode, draws, seed, cap, label="null-calibration")
        T_cal = np.column_stack([evaluate_chunked(RankSumStatistic(t), Zc, y) for t in transforms])
    tag = None if mode == EXACT else seed
    marginals = tuple(NullDistribution(T_cal[:, i], mode, tag) for i in range(len(transforms)))
    stat = MinPStatistic(transforms, marginals)
    tbar = stat.from_components(T)
    return JointNull(marginals, NullDistribution(tbar, mode, tag), NullDistribution(-tbar, mode, tag))


def _minimal_components(z, y, h, transforms):
    z, y, k, c = orient(z, y, h)
    xi = worst_case_imputation(z, y, QuantileHypothesis(k, c))
    y0 = imputed_outcomes(z, y, xi.delta)
    return np.array([rank_sum_statistic(z, y0, t) for t in transforms])


def pvalue_min_calibrated(z, y, h: QuantileHypothesis, transforms, nd_joint: JointNull) -> float:
    """``F(min_h p_h)``: minimum of the single p-values, calibrated by its null CDF."""
    transforms = tuple(transforms)
    if not transforms:
        raise ValueError("need at least one transform")
    T = _minimal_components(z, y, h, transforms)
    p_min = min(g.tail(T[i]) for i, g in enumerate(nd_joint.marginals))
    return nd_joint.tbar.cdf(p_min)


def pvalue_combined_neg_tbar(z, y, h: QuantileHypothesis, transforms, nd_joint: JointNull) -> float:
    """Tail probability of ``-tbar`` at the worst-case imputation."""
    transforms = tuple(transforms)
    T = _minimal_components(z, y, h, transforms)
    stat = NegTbarStatistic(MinPStatistic(transforms, nd_joint.marginals))
    return nd_joint.neg_tbar.tail(float(-stat.inner.from_components(T)[0]))


def pvalue_combined_max_std(z, y, h: QuantileHypothesis, transforms, nd: NullDistribution,
                            stat: MaxStdStatistic | None = None) -> float:
    transforms = tuple(transforms)
    zz, _, _, _ = orient(z, y, h)
    if stat is None:
        stat = MaxStdStatistic.for_design(transforms, zz.size, int(zz.sum()))
    T = _minimal_components(z, y, h, transforms)
    return nd.tail(float(stat.from_components(T)[0]))


# -- batched test object ----------------------------------------------------

SINGLE = "single"
MIN_P = "min_p"
NEG_TBAR = "neg_tbar"
MAX_STD = "max_std"
CRE_METHODS = (SINGLE, MIN_P, NEG_TBAR, MAX_STD)


@dataclass
class CRETest:
    """A CRE test with its null law, evaluated for all ``k`` at once.

    Data passed to the methods must already be in treated/greater form with
    ``n`` units of which ``n1`` are treated.
    """

    method: str
    transforms: tuple[RankTransform, ...]
    n: int
    n1: int
    mode: str = EXACT
    single: NullDistribution | None = None
    joint: JointNull | None = None
    max_std: MaxStdStatistic | None = None
    max_std_null: NullDistribution | None = None
    exactness: str = field(init=False)

    def __post_init__(self):
        self.exactness = self.mode

    @classmethod
    def build(cls, method, transforms, n, n1, mode=EXACT, draws=DEFAULT_DRAWS, seed=0,
              cap=DEFAULT_CAP) -> "CRETest":
        transforms = tuple(transforms)
        d = DesignSpec.cre(n, n1)
        if method not in CRE_METHODS:
            raise ValueError(f"unknown CRE method {method!r}")
        if method == SINGLE:
            if len(transforms) != 1:
                raise ValueError("method 'single' takes exactly one transform")
            nd = build_null(RankSumStatistic(transforms[0]), d, mode=mode, draws=draws,
                            seed=seed, cap=cap)
            return cls(method, transforms, n, n1, mode, single=nd)
        if method in (MIN_P, NEG_TBAR):
            joint = build_joint_null(transforms, d, mode, draws, seed, cap)
            return cls(method, transforms, n, n1, mode, joint=joint)
        stat = MaxStdStatistic.for_design(transforms, n, n1)
        nd = build_null(stat, d, mode=mode, draws=draws, seed=seed, cap=cap)
        return cls(method, transforms, n, n1, mode, max_std=stat, max_std_null=nd)

    def _check(self, z):
        if z.size != self.n or int(z.sum()) != self.n1:
            raise ValueError("data do not match the design this test was built for")

    def pvalues_from_components(self, T: np.ndarray) -> np.ndarray:
        if self.method == SINGLE:
            return self.single.tail(T[:, 0])
        if self.method == MIN_P:
            tbar = MinPStatistic(self.transforms, self.joint.marginals).from_components(T)
            return self.joint.tbar.cdf(tbar)
        if self.method == NEG_TBAR:
            tbar = MinPStatistic(self.transforms, self.joint.marginals).from_components(T)
            return self.joint.neg_tbar.tail(-tbar)
        return self.max_std_null.tail(self.max_std.from_components(T))

    def pvalues_all_k(self, z, y, c: float) -> np.ndarray:
        """p-values for ``k = 0..n1`` (index ``k``) at threshold ``c``."""
        z = np.asarray(z, dtype=np.int8)
        self._check(z)
        return np.atleast_1d(self.pvalues_from_components(worst_case_rank_sums(z, y, c, self.transforms)))

    def pvalue(self, z, y, k: int, c: float) -> float:
        z = np.asarray(z, dtype=np.int8)
        self._check(z)
        T = _minimal_components(z, y, QuantileHypothesis(k, c), self.transforms)
        return float(np.atleast_1d(self.pvalues_from_components(T[None, :]))[0])
