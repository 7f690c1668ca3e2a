"""Run configuration and the glue from a dataset to p-values and bounds tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cre, sre
from .cre import CONTROL, GREATER, LESS, TREATED, CRETest, QuantileHypothesis, flip_problem, orient
from .intervals import ALL, BoundsTable, CREProblem, SREProblem, pool_confidence, simultaneous_bounds
from .nulldist import DEFAULT_CAP, EXACT, MONTE_CARLO, DesignSpec, substream_seed
from .ranks import NORMALIZED, RankTransform

METHODS = ("single", "min_p", "max_std", "comb1", "comb2")
SOLVERS = ("dp", "bnb", "lp", "brute")
NULL_MODES = ("auto", "exact", "mc")
GROUPS = (TREATED, CONTROL, ALL)

_SOLVER_MODE = {"dp": sre.EXACT_SOLVE, "bnb": sre.EXACT_SOLVE, "lp": sre.LP_RELAXATION,
                "brute": sre.BRUTE_FORCE}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 0.1
    method: str = "single"
    transforms: tuple[RankTransform, ...] = (RankTransform.stephenson(2),)
    weights: str = sre.SCHEME1
    solver: str | None = None
    mc_draws: int = 10**4
    seed: int = 0
    group: str = TREATED
    direction: str = GREATER
    null: str = "auto"
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        object.__setattr__(self, "transforms", tuple(self.transforms))
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {', '.join(METHODS)}")
        if self.weights not in (sre.SCHEME1, sre.SCHEME2):
            raise ConfigError("weights must be scheme1 or scheme2")
        if self.solver is not None and self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {', '.join(SOLVERS)}")
        if self.group not in GROUPS:
            raise ConfigError(f"group must be one of {', '.join(GROUPS)}")
        if self.direction not in (GREATER, LESS):
            raise ConfigError("direction must be greater or less")
        if self.null not in NULL_MODES:
            raise ConfigError(f"null must be one of {', '.join(NULL_MODES)}")
        if self.mc_draws < 1:
            raise ConfigError("mc-draws must be positive")
        if not self.transforms:
            raise ConfigError("need at least one transform")
        if self.method == "single" and len(self.transforms) != 1:
            raise ConfigError("method single takes exactly one transform")
        if self.method in ("min_p", "max_std", "comb1", "comb2") and len(self.transforms) < 2:
            raise ConfigError(f"method {self.method} needs at least two transforms")
        if self.method in ("comb1", "comb2") and any(t.domain != NORMALIZED for t in self.transforms):
            raise ConfigError(f"method {self.method} needs normalized-rank transforms (e.g. poly:2)")
        if self.method == "comb1" and self.solver == "dp":
            raise ConfigError("solver dp needs a separable statistic; use bnb, lp or brute for comb1")

    @property
    def effective_solver(self) -> str:
        if self.solver is not None:
            return self.solver
        return "bnb" if self.method == "comb1" else "dp"

    @property
    def level(self) -> float:
        return 1.0 - 2.0 * self.alpha if self.group == ALL else 1.0 - self.alpha


def null_mode(config: RunConfig, d: DesignSpec) -> str:
    if config.null == "exact":
        return EXACT
    if config.null == "mc":
        return MONTE_CARLO
    return EXACT if d.count() <= config.cap else MONTE_CARLO


def _spec(config: RunConfig) -> sre.StratifiedStatisticSpec:
    ws = sre.WeightScheme(config.weights)
    combination = {
        "single": sre.SINGLE,
        "comb1": sre.AGGREGATE_THEN_COMBINE,
        "max_std": sre.AGGREGATE_THEN_COMBINE,
        "comb2": sre.COMBINE_THEN_AGGREGATE,
    }[config.method]
    return sre.StratifiedStatisticSpec(config.transforms, (ws,), combination)


def uses_stratified_machinery(config: RunConfig, stratified: bool) -> bool:
    if config.method in ("comb1", "comb2"):
        return True
    if config.method == "min_p" and stratified:
        raise ConfigError("min_p is available for completely randomized data only; use comb1 or comb2")
    if stratified and any(t.domain != NORMALIZED for t in config.transforms):
        raise ConfigError("stratified data need normalized-rank transforms (e.g. poly:2)")
    return stratified


@dataclass
class OrientedProblem:
    """A test built for one oriented dataset, ready for p-values or inversion."""

    problem: object
    exactness: str
    n1: int


def build_problem(z, y, strata, config: RunConfig, label: str) -> OrientedProblem:
    """``z, y`` already in treated/greater orientation; ``strata`` labels or ``None``."""
    seed = substream_seed(config.seed, "null", label)
    if uses_stratified_machinery(config, strata is not None):
        labels = np.zeros(len(z), dtype=int) if strata is None else strata
        data = sre.StratifiedData.from_labels(z, y, labels)
        mode = null_mode(config, data.design)
        test = sre.SRETest.build(_spec(config), data.design, mode=mode, draws=config.mc_draws,
                                 seed=seed, cap=config.cap, solver=_SOLVER_MODE[config.effective_solver])
        return OrientedProblem(SREProblem(test, data), test.exactness, data.n1)
    z = np.asarray(z, dtype=np.int8)
    d = DesignSpec.cre(z.size, int(z.sum()))
    mode = null_mode(config, d)
    method = {"single": cre.SINGLE, "min_p": cre.MIN_P, "max_std": cre.MAX_STD}[config.method]
    test = CRETest.build(method, config.transforms, d.n, d.n1, mode=mode, draws=config.mc_draws,
                         seed=seed, cap=config.cap)
    return OrientedProblem(CREProblem(test, z, np.asarray(y, float)), test.exactness, d.n1)


def _oriented_data(z, y, group: str):
    return flip_problem(z, y) if group == CONTROL else (np.asarray(z), np.asarray(y, float))


def hypothesis_pvalue(z, y, strata, config: RunConfig, k: int, c: float) -> tuple[float, str]:
    """p-value and exactness label for ``tau_group(k) <= c`` (or ``>=`` for direction less)."""
    if config.group == ALL:
        raise ConfigError("hypothesis tests take group treated or control")
    h = QuantileHypothesis(k, c, config.group, config.direction)
    zo, yo, ko, co = orient(z, y, h)
    m = int(np.sum(zo))
    if not 0 <= ko <= m:
        raise ConfigError(f"k={k} outside 0..{m} for group {config.group}")
    op = build_problem(zo, yo, strata, config, config.group)
    return float(op.problem.pvalue(ko, co)), op.exactness


def bounds_table(z, y, strata, config: RunConfig) -> BoundsTable:
    """Simultaneous lower bounds for the configured group."""
    if config.direction != GREATER:
        raise ConfigError("bounds are lower bounds; negate the outcomes to obtain upper bounds")

    def one(group):
        zo, yo = _oriented_data(z, y, group)
        op = build_problem(zo, yo, strata, config, group)
        return simultaneous_bounds(op.problem, config.alpha, group)

    if config.group == ALL:
        return pool_confidence(one(TREATED), one(CONTROL), n=len(z))
    return one(config.group)


__all__ = [
    "ConfigError",
    "METHODS",
    "RunConfig",
    "bounds_table",
    "build_problem",
    "null_mode",
    "hypothesis_pvalue",
]
