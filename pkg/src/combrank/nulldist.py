"""Randomization laws of distribution-free statistics under CRE/SRE designs.

A statistic here is anything with ``evaluate(Z, y) -> values`` where ``Z`` is a
``(draws, n)`` 0/1 matrix of assignments.  Units of a :class:`DesignSpec` are
laid out stratum by stratum; because the statistics are distribution-free the
reference outcomes only need to be a fixed vector (``0..n-1`` by default).
"""

from __future__ import annotations

import itertools
import math
import zlib
from dataclasses import dataclass
from typing import Iterator

import numpy as np

DEFAULT_CAP = 10**6
DEFAULT_DRAWS = 10**4
EXACT = "exact"
MONTE_CARLO = "monte_carlo"

# Relative slack when comparing statistic values.  Two evaluations of the same
# rank configuration may be summed in a different order; the slack only ever
# counts more draws as "at least as extreme", so it errs on the conservative side.
REL_TOL = 1e-10


class EnumerationCapError(RuntimeError):
    pass


def substream(seed: int, *labels) -> np.random.Generator:
    """Independent generator for a labelled split of the master seed."""
    key = tuple(zlib.crc32(str(lab).encode()) for lab in labels)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def substream_seed(seed: int, *labels) -> int:
    return int(substream(seed, *labels).integers(2**63 - 1))


@dataclass(frozen=True)
class DesignSpec:
    """Stratum sizes ``(n_s, n_s1)``; a CRE is a single stratum."""

    strata: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "strata", tuple((int(a), int(b)) for a, b in self.strata))
        if not self.strata:
            raise ValueError("design has no strata")
        for n_s, n_s1 in self.strata:
            if n_s < 1 or not 0 <= n_s1 <= n_s:
                raise ValueError(f"invalid stratum ({n_s}, {n_s1})")

    @classmethod
    def cre(cls, n: int, n1: int) -> "DesignSpec":
        return cls(((n, n1),))

    @property
    def n(self) -> int:
        return sum(a for a, _ in self.strata)

    @property
    def n1(self) -> int:
        return sum(b for _, b in self.strata)

    def labels(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.strata)), [a for a, _ in self.strata])

    def count(self) -> int:
        return math.prod(math.comb(a, b) for a, b in self.strata)

    def check_active(self):
        for n_s, n_s1 in self.strata:
            if not 1 <= n_s1 <= n_s - 1:
                raise ValueError(
                    f"stratum ({n_s}, {n_s1}) needs at least one treated and one control unit"
                )


def _stratum_combinations(n_s: int, n_s1: int) -> np.ndarray:
    rows = np.zeros((math.comb(n_s, n_s1), n_s), dtype=np.int8)
    for r, idx in enumerate(itertools.combinations(range(n_s), n_s1)):
        rows[r, list(idx)] = 1
    return rows


def assignment_matrix(d: DesignSpec, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Every assignment of the design, one per row, in lexicographic stratum order."""
    d.check_active()
    total = d.count()
    if total > cap:
        raise EnumerationCapError(
            f"design has {total} assignments (cap {cap}); use Monte Carlo mode"
        )
    blocks = [_stratum_combinations(a, b) for a, b in d.strata]
    Z = np.empty((total, d.n), dtype=np.int8)
    # mixed-radix product over strata, first stratum varying slowest
    idx = np.arange(total)
    col = 0
    stride = total
    for blk in blocks:
        stride //= blk.shape[0]
        Z[:, col:col + blk.shape[1]] = blk[(idx // stride) % blk.shape[0]]
        col += blk.shape[1]
    return Z


def enumerate_assignments(d: DesignSpec, cap: int = DEFAULT_CAP) -> Iterator[np.ndarray]:
    """Yield each assignment vector consistent with the design exactly once."""
    yield from assignment_matrix(d, cap)


def draw_assignments(d: DesignSpec, draws: int, rng: np.random.Generator) -> np.ndarray:
    """``draws`` i.i.d. assignments from the design."""
    d.check_active()
    Z = np.zeros((draws, d.n), dtype=np.int8)
    rows = np.arange(draws)[:, None]
    col = 0
    for n_s, n_s1 in d.strata:
        picks = np.argsort(rng.random((draws, n_s)), axis=1)[:, :n_s1]
        Z[rows, col + picks] = 1
        col += n_s
    return Z


@dataclass(frozen=True)
class NullDistribution:
    """Randomization law of one statistic.

    ``values`` is sorted.  In exact mode every assignment carries weight
    ``1/len(values)``.  In Monte Carlo mode tail and CDF values use the add-one
    estimator ``(1 + #{...}) / (M + 1)`` so the resulting p-values stay valid.
    """

    values: np.ndarray
    mode: str = EXACT
    seed: int | None = None

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.mode not in (EXACT, MONTE_CARLO):
            raise ValueError(f"unknown null mode {self.mode!r}")
        if v.size == 0:
            raise ValueError("empty null distribution")

    @property
    def size(self) -> int:
        return self.values.size

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct values and their probabilities (exact mode)."""
        vals, counts = np.unique(self.values, return_counts=True)
        return vals, counts / self.size

    def _finish(self, count):
        if self.mode == EXACT:
            return count / self.size
        return (1.0 + count) / (self.size + 1.0)

    def tail(self, c):
        """G(c) = P(T >= c)."""
        c = np.asarray(c, dtype=float)
        slack = REL_TOL * np.maximum(1.0, np.abs(np.where(np.isfinite(c), c, 0.0)))
        count = self.size - np.searchsorted(self.values, c - slack, side="left")
        out = self._finish(count)
        return float(out) if out.ndim == 0 else out

    def cdf(self, a):
        """P(T <= a)."""
        a = np.asarray(a, dtype=float)
        slack = REL_TOL * np.maximum(1.0, np.abs(np.where(np.isfinite(a), a, 0.0)))
        count = np.searchsorted(self.values, a + slack, side="right")
        out = self._finish(count)
        return float(out) if out.ndim == 0 else out


def evaluate_chunked(stat, Z: np.ndarray, y: np.ndarray, chunk: int = 20000) -> np.ndarray:
    out = np.empty(Z.shape[0], dtype=float)
    for start in range(0, Z.shape[0], chunk):
        out[start:start + chunk] = stat.evaluate(Z[start:start + chunk], y)
    return out


def null_assignments(
    d: DesignSpec,
    mode: str = EXACT,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
    label: str = "null-draws",
) -> np.ndarray:
    if mode == EXACT:
        return assignment_matrix(d, cap)
    if mode == MONTE_CARLO:
        return draw_assignments(d, draws, substream(seed, label))
    raise ValueError(f"unknown null mode {mode!r}")


def build_null(
    stat,
    d: DesignSpec,
    reference_y=None,
    mode: str = EXACT,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
) -> NullDistribution:
    """Exact or Monte Carlo law of ``stat`` under design ``d``.

    ``reference_y`` defaults to ``0..n-1``; any fixed vector gives the same
    law for a distribution-free statistic.
    """
    y = np.arange(d.n, dtype=float) if reference_y is None else np.asarray(reference_y, float)
    if y.size != d.n:
        raise ValueError("reference outcome length does not match the design")
    Z = null_assignments(d, mode, draws, seed, cap)
    return NullDistribution(evaluate_chunked(stat, Z, y), mode, None if mode == EXACT else seed)


def tail_probability(nd: NullDistribution, c: float) -> float:
    return nd.tail(c)


def calibrate_min_p(nd_joint: NullDistribution, alpha: float) -> float:
    """F(alpha) = P(min-p statistic <= alpha) under the design."""
    return nd_joint.cdf(alpha)
