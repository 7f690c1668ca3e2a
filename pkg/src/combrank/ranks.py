"""Within-group ranks, rank transformations, and exact moments of transformed ranks.

Ties are broken by position: ``r_i < r_j`` iff ``y_i < y_j`` or
``y_i == y_j and i < j``.  Callers that want random tie-breaking shuffle the
units once up front (see :func:`shuffle_positions`) and keep that order for the
whole analysis.  ``-inf`` is a legal outcome and sorts below every finite value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

RAW = "raw"
NORMALIZED = "normalized"


def shuffle_positions(n: int, seed: int) -> np.ndarray:
    """Post-shuffle position of every unit under a seeded random shuffle."""
    perm = np.random.default_rng(seed).permutation(n)
    pos = np.empty(n, dtype=np.int64)
    pos[perm] = np.arange(n)
    return pos


def compute_ranks(y, tie_seed: int | None = None) -> np.ndarray:
    """Ranks ``1..m`` of ``y`` with index tie-breaking.

    With ``tie_seed`` the index used for tie-breaking is the unit's position
    after one seeded shuffle; otherwise it is the position in ``y``.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("compute_ranks expects a 1-d outcome vector")
    if y.size == 0:
        raise ValueError("empty group")
    if np.isnan(y).any():
        raise ValueError("outcomes must not be NaN")
    if tie_seed is None:
        order = np.argsort(y, kind="stable")
    else:
        order = np.lexsort((shuffle_positions(y.size, tie_seed), y))
    ranks = np.empty(y.size, dtype=np.int64)
    ranks[order] = np.arange(1, y.size + 1)
    return ranks


def rank_rows(Y: np.ndarray) -> np.ndarray:
    """Row-wise :func:`compute_ranks` for a 2-d array (index tie-breaking)."""
    order = np.argsort(Y, axis=1, kind="stable")
    ranks = np.empty(Y.shape, dtype=np.int64)
    rows = np.arange(Y.shape[0])[:, None]
    ranks[rows, order] = np.arange(1, Y.shape[1] + 1)
    return ranks


def rank_ordered_sum(Z, ranks, phi) -> np.ndarray:
    """``sum_i Z[..., i] * phi[r_i - 1]`` accumulated in rank order.

    ``ranks`` is one rank vector shared by every row of ``Z`` or one per row.
    Summing over ranks rather than units makes the value a function of the
    treated rank set alone, so permuting the outcomes cannot move it by a
    rounding error.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    ranks = np.asarray(ranks)
    if ranks.ndim == 1:
        by_rank = Z[:, np.argsort(ranks)]
    else:
        by_rank = np.zeros_like(Z)
        by_rank[np.arange(Z.shape[0])[:, None], ranks - 1] = Z
    return np.sum(by_rank * np.asarray(phi, dtype=float), axis=1)


@dataclass(frozen=True)
class RankTransform:
    """Monotone nondecreasing transformation of ranks.

    ``kind`` is one of ``stephenson`` (raw ranks, integer ``param >= 2``),
    ``polynomial`` (normalized ranks, ``phi(x) = x**(param - 1)``, ``param >= 1``),
    ``identity`` (either domain) or ``table`` (raw ranks, explicit values).
    """

    kind: str
    param: float | None = None
    domain: str = RAW
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.domain not in (RAW, NORMALIZED):
            raise ValueError(f"unknown rank domain {self.domain!r}")
        if self.kind == "stephenson":
            if self.param is None or int(self.param) != self.param or self.param < 2:
                raise ValueError("stephenson transform needs an integer parameter >= 2")
            if self.domain != RAW:
                raise ValueError("stephenson transform acts on raw ranks")
        elif self.kind == "polynomial":
            if self.param is None or not self.param >= 1:
                raise ValueError("polynomial transform needs a parameter >= 1")
            if self.domain != NORMALIZED:
                raise ValueError("polynomial transform acts on normalized ranks")
        elif self.kind == "table":
            if not self.values:
                raise ValueError("table transform needs values")
            if any(b < a for a, b in zip(self.values, self.values[1:])):
                raise ValueError("table transform must be nondecreasing")
            if self.domain != RAW:
                raise ValueError("table transform acts on raw ranks")
        elif self.kind != "identity":
            raise ValueError(f"unknown transform kind {self.kind!r}")

    @classmethod
    def stephenson(cls, zeta: int) -> "RankTransform":
        return cls("stephenson", int(zeta), RAW)

    @classmethod
    def polynomial(cls, zeta: float) -> "RankTransform":
        return cls("polynomial", float(zeta), NORMALIZED)

    @classmethod
    def identity(cls, domain: str = RAW) -> "RankTransform":
        return cls("identity", None, domain)

    @classmethod
    def table(cls, values) -> "RankTransform":
        return cls("table", None, RAW, tuple(float(v) for v in values))

    @classmethod
    def parse(cls, text: str) -> "RankTransform":
        """Parse ``stephenson:6``, ``poly:10``, ``identity`` or ``identity:normalized``."""
        name, _, arg = text.strip().partition(":")
        name = name.lower()
        if name in ("stephenson", "steph", "s"):
            return cls.stephenson(int(arg))
        if name in ("poly", "polynomial", "p"):
            return cls.polynomial(float(arg))
        if name in ("identity", "wilcoxon"):
            return cls.identity(NORMALIZED if arg.startswith("norm") else RAW)
        raise ValueError(f"cannot parse rank transform {text!r}")

    @property
    def label(self) -> str:
        if self.kind == "stephenson":
            return f"stephenson({int(self.param)})"
        if self.kind == "polynomial":
            return f"poly({self.param:g})"
        if self.kind == "identity":
            return "identity" if self.domain == RAW else "identity(normalized)"
        return f"table({len(self.values)})"

    def on_unit_interval(self, x):
        """phi evaluated on normalized ranks ``x`` in ``[0, 1]``."""
        if self.domain != NORMALIZED:
            raise ValueError(f"{self.label} is not defined on normalized ranks")
        x = np.asarray(x, dtype=float)
        if self.kind == "identity":
            return x
        return x ** (self.param - 1.0)


def _stephenson_score(r: int, zeta: int) -> float:
    if r < zeta:
        return 0.0
    # exact integer binomial, rounded once; stays finite well past r ~ 10**4
    return float(math.comb(r - 1, zeta - 1))


@lru_cache(maxsize=4096)
def _phi_table_cached(t: RankTransform, m: int) -> np.ndarray:
    r = np.arange(1, m + 1)
    if t.kind == "stephenson":
        out = np.array([_stephenson_score(int(i), int(t.param)) for i in r])
    elif t.kind == "table":
        if len(t.values) < m:
            raise ValueError("transform/table size mismatch")
        out = np.array(t.values[:m], dtype=float)
    elif t.domain == RAW:  # identity on raw ranks
        out = r.astype(float)
    else:
        out = t.on_unit_interval(r / (m + 1.0))
    out.setflags(write=False)
    return out


def phi_table(t: RankTransform, m: int) -> np.ndarray:
    """``[phi(1), ..., phi(m)]`` for a group of size ``m`` (read-only, cached)."""
    if m < 1:
        raise ValueError("empty group")
    return _phi_table_cached(t, int(m))


def apply_transform(t: RankTransform, r: int, m: int) -> float:
    """Transformed value of rank ``r`` in a group of size ``m``.

    Normalized-domain transforms see ``r / (m + 1)``.
    """
    if int(r) != r or not 1 <= r <= m:
        raise ValueError(f"rank {r} outside 1..{m}")
    return float(phi_table(t, m)[int(r) - 1])


@dataclass(frozen=True)
class TransformMoments:
    """Randomization moments of one stratum's mean-of-transformed-ranks statistic.

    ``mu_s`` and ``sigma_s`` describe ``(1/n_s1) * sum_i z_i phi(r_i)`` under
    complete randomization of ``n_s1`` out of ``n_s`` units.  ``sd_phi_U`` is
    the standard deviation of ``phi(U)`` for ``U ~ Uniform(0, 1)`` and is
    ``None`` for raw-rank transforms.
    """

    mu_s: float
    sigma_s: float
    sd_phi_U: float | None
    degenerate: bool = False


def sd_phi_uniform(t: RankTransform) -> float:
    """Standard deviation of ``phi(U)``, ``U ~ Uniform(0, 1)``."""
    if t.domain != NORMALIZED:
        raise ValueError(f"sd of phi(U) needs a normalized-rank transform, got {t.label}")
    if t.kind == "polynomial":
        z = t.param
        return math.sqrt(max(1.0 / (2.0 * z - 1.0) - 1.0 / z**2, 0.0))
    f = lambda u: float(t.on_unit_interval(u))
    m1 = integrate.quad(f, 0.0, 1.0, epsrel=1e-10)[0]
    m2 = integrate.quad(lambda u: f(u) ** 2, 0.0, 1.0, epsrel=1e-10)[0]
    return math.sqrt(max(m2 - m1 * m1, 0.0))


def transform_moments(t: RankTransform, n_s: int, n_s1: int) -> TransformMoments:
    if n_s < 1:
        raise ValueError("empty group")
    phi = phi_table(t, n_s)
    mu = float(phi.mean())
    sd_u = sd_phi_uniform(t) if t.domain == NORMALIZED else None
    if n_s1 <= 0 or n_s1 >= n_s:
        return TransformMoments(mu, 0.0, sd_u, degenerate=True)
    n_s0 = n_s - n_s1
    ss = float(np.sum((phi - mu) ** 2))
    var = n_s0 / (n_s1 * n_s * (n_s - 1.0)) * ss
    return TransformMoments(mu, math.sqrt(var), sd_u)
