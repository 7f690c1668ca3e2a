"""Simulation harness: median lower prediction bounds over replicated experiments.

Potential outcomes are ``Y(0) ~ N(0, 1)`` and ``Y(1) ~ N(2, sigma^2)``; half of
each stratum (or of the whole sample) is treated.  Every replication draws its
data and its Monte Carlo nulls from its own labelled substream, so results do
not depend on how replications are scheduled across workers.
"""

from __future__ import annotations

import csv
import io
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import RunConfig, bounds_table
from .nulldist import substream, substream_seed
from .ranks import RankTransform

CRE_ZETAS = (2, 6, 10, 30)
SRE_ZETAS = (2, 6, 10)
STRATIFICATIONS = {
    "s1": ((10, 100),),
    "s2": ((100, 10),),
    "s3": ((33, 10), (16, 20), (7, 50)),
}


@dataclass(frozen=True)
class MethodSpec:
    label: str
    config: RunConfig


@dataclass(frozen=True)
class Scenario:
    """``strata`` lists ``(count, size)`` blocks; a CRE is one block of one stratum."""

    name: str
    sigma: float
    strata: tuple[tuple[int, int], ...]
    stratified: bool
    methods: tuple[MethodSpec, ...]
    reps: int = 100

    @property
    def sizes(self) -> list[int]:
        return [size for count, size in self.strata for _ in range(count)]

    @property
    def n(self) -> int:
        return sum(self.sizes)


def cre_methods(alpha=0.1, mc_draws=10**4, zetas=CRE_ZETAS, combined=("min_p",)) -> tuple[MethodSpec, ...]:
    ts = tuple(RankTransform.stephenson(z) for z in zetas)
    out = [MethodSpec(t.label, RunConfig(alpha, "single", (t,), mc_draws=mc_draws)) for t in ts]
    out += [MethodSpec(m, RunConfig(alpha, m, ts, mc_draws=mc_draws)) for m in combined]
    return tuple(out)


def sre_methods(alpha=0.1, mc_draws=10**4, zetas=SRE_ZETAS, weights=("scheme1", "scheme2"),
                combined=("comb1", "comb2"), singles=True) -> tuple[MethodSpec, ...]:
    ts = tuple(RankTransform.polynomial(z) for z in zetas)
    out = []
    for w in weights:
        if singles:
            out += [MethodSpec(f"{t.label}/{w}", RunConfig(alpha, "single", (t,), weights=w, mc_draws=mc_draws))
                    for t in ts]
        out += [MethodSpec(f"{m}/{w}", RunConfig(alpha, m, ts, weights=w, mc_draws=mc_draws)) for m in combined]
    return tuple(out)


_SCENARIO = re.compile(r"^(cre|sre-(s[123]))-sigma([0-9.]+)$")


def parse_scenario(text: str, n: int = 100, scale: float = 1.0, reps: int = 100, alpha: float = 0.1,
                   mc_draws: int = 10**4, methods: tuple[MethodSpec, ...] | None = None) -> Scenario:
    """``cre-sigma5`` (``n`` units) or ``sre-s3-sigma1`` (stratum counts times ``scale``)."""
    m = _SCENARIO.match(text.strip().lower())
    if not m:
        raise ValueError(f"unknown scenario {text!r}; expected cre-sigma<s> or sre-s<1|2|3>-sigma<s>")
    sigma = float(m.group(3))
    if m.group(1) == "cre":
        if n < 2:
            raise ValueError("n must be at least 2")
        return Scenario(text, sigma, ((1, n),), False, methods or cre_methods(alpha, mc_draws), reps)
    blocks = tuple((max(1, int(round(count * scale))), size) for count, size in STRATIFICATIONS[m.group(2)])
    return Scenario(text, sigma, blocks, True, methods or sre_methods(alpha, mc_draws), reps)


def generate(scenario: Scenario, rng: np.random.Generator):
    """One experiment: ``(z, y, strata labels or None, treated effects)``."""
    sizes = scenario.sizes
    n = sum(sizes)
    y0 = rng.normal(0.0, 1.0, n)
    y1 = rng.normal(2.0, scenario.sigma, n)
    z = np.zeros(n, dtype=np.int8)
    start = 0
    for size in sizes:
        z[start + rng.permutation(size)[: size // 2]] = 1
        start += size
    labels = np.repeat(np.arange(len(sizes)), sizes) if scenario.stratified else None
    return z, np.where(z == 1, y1, y0), labels, (y1 - y0)


def run_replication(scenario: Scenario, seed: int, rep: int) -> dict[str, np.ndarray]:
    rng = substream(seed, scenario.name, "data", rep)
    z, y, labels, _ = generate(scenario, rng)
    rep_seed = substream_seed(seed, scenario.name, "nulls", rep)
    out = {}
    for m in scenario.methods:
        cfg = replace(m.config, seed=rep_seed)
        out[m.label] = bounds_table(z, y, labels, cfg).bounds
    return out


def _run(args):
    return run_replication(*args)


@dataclass
class SimulationResult:
    scenario: Scenario
    bounds: dict[str, np.ndarray] = field(default_factory=dict)  # (reps, n1) per method

    def medians(self) -> dict[str, np.ndarray]:
        return {m: np.median(b, axis=0) for m, b in self.bounds.items()}


def simulate(scenario: Scenario, seed: int = 0, workers: int = 1) -> SimulationResult:
    jobs = [(scenario, seed, r) for r in range(scenario.reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            reps = list(ex.map(_run, jobs))
    else:
        reps = [_run(j) for j in jobs]
    res = SimulationResult(scenario)
    for m in scenario.methods:
        res.bounds[m.label] = np.vstack([r[m.label] for r in reps])
    return res


def format_number(v: float) -> str:
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return repr(float(v))


def to_csv(result: SimulationResult, seed: int) -> str:
    buf = io.StringIO()
    sc = result.scenario
    buf.write(f"# scenario={sc.name} n={sc.n} reps={sc.reps} seed={seed}\n")
    alphas = sorted({m.config.alpha for m in sc.methods})
    buf.write(f"# statistic=median of {', '.join(f'{1 - a:g}' for a in alphas)} lower prediction bounds, treated units\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "method", "k", "median_lower_bound"])
    for label, med in result.medians().items():
        for k, v in enumerate(med, start=1):
            w.writerow([sc.name, label, k, format_number(v)])
    return buf.getvalue()
