"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines also appear
at the end of any pytest run that collects this module.
"""

import itertools
import time
from dataclasses import replace

import numpy as np

from combrank import cli
from combrank.analysis import RunConfig, bounds_table, build_problem
from combrank.cre import (
    MaxStdStatistic,
    MinPStatistic,
    QuantileHypothesis,
    RankSumStatistic,
    build_joint_null,
    pvalue_combined_neg_tbar,
    pvalue_min_calibrated,
    pvalue_single,
)
from combrank.intervals import CLOSED, candidate_breakpoints, pool_confidence, search_points
from combrank.lp import TOL, branch_and_bound
from combrank.nulldist import MONTE_CARLO, DesignSpec, build_null
from combrank.oracle import (
    brute_infimum_by_budget,
    brute_null,
    brute_tail,
    minimax_objective,
    rank_sum,
    separable_objective,
)
from combrank.ranks import RankTransform
from combrank.simulate import cre_methods, parse_scenario, simulate, sre_methods
from combrank.sre import (
    AGGREGATE_THEN_COMBINE,
    COMBINE_THEN_AGGREGATE,
    EXACT_SOLVE,
    LP_RELAXATION,
    SCHEME1,
    SCHEME2,
    SINGLE,
    StratifiedStatistic,
    StratifiedStatisticSpec,
    WeightScheme,
    allocate_dp,
    allocate_minimax,
    build_infimum_table,
    build_sre_null,
    minimax_problem,
    separable_values,
)

ALPHA = 0.1
STEPH = {z: RankTransform.stephenson(z) for z in (2, 3, 4, 6, 30)}
POLY = tuple(RankTransform.polynomial(z) for z in (2, 6))


def cre_designs(n_max):
    return [(n, n1) for n in range(2, n_max + 1) for n1 in range(1, n)]


def outcome_vectors(n, rng):
    """Ties, distinct values and a constant vector."""
    return [
        rng.integers(-2, 3, n).astype(float),
        np.round(rng.normal(size=n), 2),
        np.zeros(n),
    ]


def random_assignment(n, n1, rng):
    z = np.zeros(n, dtype=np.int8)
    z[rng.permutation(n)[:n1]] = 1
    return z


# -- 1 ------------------------------------------------------------------------


def test_single_pvalue_equals_brute_force_infimum(report):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    transforms = [RankTransform.identity()] + [STEPH[z] for z in (2, 3, 4)]
    checked, mismatches = 0, []
    for n, n1 in cre_designs(8):
        d = DesignSpec.cre(n, n1)
        nulls = {t: build_null(RankSumStatistic(t), d) for t in transforms}
        refs = {t: brute_null(lambda z, y, t=t: rank_sum(z, y, t), d.strata, np.arange(n, dtype=float))
                for t in transforms}
        for _ in range(2):
            z = random_assignment(n, n1, rng)
            for y in outcome_vectors(n, rng):
                for c in search_points(candidate_breakpoints(z, y)):
                    for t in transforms:
                        inf_k = brute_infimum_by_budget(z, y, c, t)
                        for k in range(n1 + 1):
                            ours = pvalue_single(z, y, QuantileHypothesis(k, float(c)), t, nulls[t])
                            ref = brute_tail(refs[t].values, inf_k[k])
                            checked += 1
                            if ours != ref:
                                mismatches.append((n, n1, k, c, t.label, ours, ref))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 120
    report(1, "single p-value equals brute-force infimum p-value", ok,
           f"{checked} cases, {len(mismatches)} mismatches, {elapsed:.1f}s")
    assert ok, mismatches[:5]


# -- 2 ------------------------------------------------------------------------


def test_min_p_calibration_identity(report):
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    sets = [(STEPH[2], STEPH[3]), (RankTransform.identity(), STEPH[4]), (STEPH[2], STEPH[3], STEPH[4])]
    checked, mismatches = 0, []
    for n, n1 in cre_designs(6):
        d = DesignSpec.cre(n, n1)
        joints = {ts: build_joint_null(ts, d) for ts in sets}
        z = random_assignment(n, n1, rng)
        for y in outcome_vectors(n, rng):
            for c in search_points(candidate_breakpoints(z, y)):
                for k in range(n1 + 1):
                    h = QuantileHypothesis(k, float(c))
                    for ts, joint in joints.items():
                        a = pvalue_min_calibrated(z, y, h, ts, joint)
                        b = pvalue_combined_neg_tbar(z, y, h, ts, joint)
                        checked += 1
                        if a != b:
                            mismatches.append((n, n1, k, c, len(ts), a, b))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 120
    report(2, "calibrated min-p equals -tbar p-value", ok,
           f"{checked} cases, {len(mismatches)} mismatches, {elapsed:.1f}s")
    assert ok, mismatches[:5]


# -- 3 ------------------------------------------------------------------------


def sre_designs(S_max=4, n_max=6):
    types = [(a, b) for a in range(2, n_max + 1) for b in range(1, a)]
    return [d for S in range(1, S_max + 1) for d in itertools.combinations_with_replacement(types, S)]


def minima_by_budget(caps, objective):
    best = {}
    for alloc in itertools.product(*(range(m + 1) for m in caps)):
        k, v = sum(alloc), objective(alloc)
        if v < best.get(k, np.inf):
            best[k] = v
    return best


def test_allocation_solvers_match_brute_force(report):
    start = time.perf_counter()
    designs = sre_designs()
    counts = dict(dp=0, minimax=0, bnb=0, lp=0)
    bad = []
    specs = {
        "single": StratifiedStatisticSpec(POLY, (WeightScheme(SCHEME1),), SINGLE, single_index=1),
        "cta": StratifiedStatisticSpec(POLY, (WeightScheme(SCHEME2),), COMBINE_THEN_AGGREGATE),
    }
    atc = StratifiedStatisticSpec(POLY, (WeightScheme(SCHEME1),), AGGREGATE_THEN_COMBINE)
    for i, strata in enumerate(designs):
        rng = np.random.default_rng(i)
        d = DesignSpec(strata)
        z = np.concatenate([rng.permutation([1] * b + [0] * (a - b)) for a, b in strata]).astype(np.int8)
        y = np.round(rng.normal(size=d.n) + z, 2)
        c = float(np.median(candidate_breakpoints(z, y, d.labels())))
        table = build_infimum_table(z, y, strata, c, POLY)
        caps = table.capacities
        for name, spec in specs.items():
            vals = separable_values(table, spec, strata)
            ref = minima_by_budget(caps, separable_objective(vals))
            for k, v in ref.items():
                counts["dp"] += 1
                if allocate_dp(vals, k).objective != v:
                    bad.append(("dp", name, strata, k))
        prob = minimax_problem(table, atc, strata)
        ref = minima_by_budget(caps, minimax_objective(prob.values, prob.mu, prob.sigma))
        nd = build_sre_null(atc, d, mode=MONTE_CARLO, draws=200, seed=i)
        for k, v in ref.items():
            exact = allocate_minimax(prob, k, EXACT_SOLVE)
            counts["minimax"] += 1
            if exact.objective != v:
                bad.append(("minimax", strata, k, exact.objective, v))
            bb = branch_and_bound(prob, k)
            counts["bnb"] += 1
            if not abs(bb.objective - v) <= TOL * (1.0 + abs(v)):
                bad.append(("bnb", strata, k, bb.objective, v))
            lp = allocate_minimax(prob, k, LP_RELAXATION)
            counts["lp"] += 1
            if not (lp.objective <= exact.objective and nd.tail(lp.objective) >= nd.tail(exact.objective)):
                bad.append(("lp", strata, k, lp.objective, exact.objective))
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 300
    report(3, "knapsack and minimax solvers match brute-force minima", ok,
           f"{len(designs)} designs, {counts}, {len(bad)} failures, {elapsed:.1f}s")
    assert ok, bad[:5]


# -- 4 and 5 ------------------------------------------------------------------

REPS = 2000
N, N1, C0 = 20, 10, 1.0


def validity_methods():
    common = dict(mc_draws=2000, null="mc")
    return {
        "stephenson(2)": RunConfig(ALPHA, "single", (STEPH[2],), **common),
        "stephenson(6)": RunConfig(ALPHA, "single", (STEPH[6],), **common),
        "min_p": RunConfig(ALPHA, "min_p", (STEPH[2], STEPH[6]), **common),
        "max_std": RunConfig(ALPHA, "max_std", (STEPH[2], STEPH[6]), **common),
    }


def constant_effect_population():
    rng = np.random.default_rng(404)
    # dyadic outcomes keep y1 - y0 == C0 exact in floating point
    y0 = np.round(rng.normal(size=N) * 1024) / 1024
    y1 = y0 + C0
    assert np.all(y1 - y0 == C0)
    return y0, y1


def test_finite_sample_validity(report):
    start = time.perf_counter()
    y0, y1 = constant_effect_population()
    rng = np.random.default_rng(405)
    methods = validity_methods()
    rejections = {m: np.zeros(N1) for m in methods}
    for r in range(REPS):
        z = random_assignment(N, N1, rng)
        y = np.where(z == 1, y1, y0)
        for m, cfg in methods.items():
            op = build_problem(z, y, None, replace(cfg, seed=r), "treated")
            p = op.problem.pvalues_all_k(C0)[1:]
            rejections[m] += p <= ALPHA
    limit = ALPHA + 3 * np.sqrt(ALPHA * (1 - ALPHA) / REPS)
    worst = {m: float(v.max() / REPS) for m, v in rejections.items()}
    elapsed = time.perf_counter() - start
    ok = all(v <= limit for v in worst.values()) and elapsed < 600
    detail = ", ".join(f"{m} max rate {v:.4f}" for m, v in worst.items())
    report(4, "rejection rate under a true null at most alpha + 3 se", ok,
           f"{detail} (limit {limit:.4f}), {elapsed:.1f}s")
    assert ok


def covers(table, truth_sorted):
    b = table.bounds
    closed = np.array([e == CLOSED for e in table.endpoints])
    return bool(np.all((b < truth_sorted) | ((b == truth_sorted) & closed)))


def test_simultaneous_coverage(report):
    start = time.perf_counter()
    y0, y1 = constant_effect_population()
    tau = y1 - y0
    rng = np.random.default_rng(505)
    methods = validity_methods()
    treated_hits = {m: 0 for m in methods}
    pooled_hits = {m: 0 for m in methods}
    for r in range(REPS):
        z = random_assignment(N, N1, rng)
        y = np.where(z == 1, y1, y0)
        for m, cfg in methods.items():
            cfg = replace(cfg, seed=r)
            t = bounds_table(z, y, None, replace(cfg, group="treated"))
            c = bounds_table(z, y, None, replace(cfg, group="control"))
            treated_hits[m] += covers(t, np.sort(tau[z == 1]))
            pooled_hits[m] += covers(pool_confidence(t, c, n=N), np.sort(tau))
    t_rate = {m: v / REPS for m, v in treated_hits.items()}
    p_rate = {m: v / REPS for m, v in pooled_hits.items()}
    elapsed = time.perf_counter() - start
    ok = (all(v >= 0.9 - 0.02 for v in t_rate.values()) and all(v >= 0.8 - 0.02 for v in p_rate.values())
          and elapsed < 600)
    detail = ", ".join(f"{m} {t_rate[m]:.3f}/{p_rate[m]:.3f}" for m in methods)
    report(5, "simultaneous coverage treated >= 0.88, pooled all-units >= 0.78", ok,
           f"{detail}, {elapsed:.1f}s")
    assert ok


# -- 6 ------------------------------------------------------------------------

SIGMAS = (0.2, 0.5, 1, 2, 5)


def test_simulation_orderings(report):
    start = time.perf_counter()
    n, reps = 60, 50
    n1 = n // 2
    meds = {}
    for sigma in SIGMAS:
        sc = parse_scenario(f"cre-sigma{sigma}", n=n, reps=reps,
                            methods=cre_methods(ALPHA, 2000))
        meds[sigma] = simulate(sc, seed=6).medians()

    # (a) high quantiles under large effect spread: zeta = 30 above zeta = 2
    top = np.arange(n1) >= int(0.75 * n1)
    hi, lo = meds[5]["stephenson(30)"][top], meds[5]["stephenson(2)"][top]
    share = float(np.mean(hi >= lo))
    ok_a = share >= 0.75

    # (b) the combined method loses few informative quantiles to the best single one
    gaps = {}
    for sigma in SIGMAS:
        finite = {m: int(np.isfinite(v).sum()) for m, v in meds[sigma].items()}
        best_single = max(v for m, v in finite.items() if m != "min_p")
        gaps[sigma] = finite["min_p"] - best_single
    ok_b = all(g >= -0.1 * n1 for g in gaps.values())

    # (c) stratified S3: Scheme 1 weights beat Scheme 2 at low quantiles
    sre = parse_scenario("sre-s3-sigma1", scale=0.25, reps=30,
                         methods=sre_methods(ALPHA, 2000, combined=("comb2",), singles=False))
    m = simulate(sre, seed=6).medians()
    s1, s2 = m["comb2/scheme1"], m["comb2/scheme2"]
    both = np.flatnonzero(np.isfinite(s1) & np.isfinite(s2))
    low = both[: max(1, both.size // 2)]
    diff = float(np.mean(s1[low] - s2[low])) if both.size else np.nan
    ok_c = int(np.isfinite(s1).sum()) >= int(np.isfinite(s2).sum()) and diff >= 0

    elapsed = time.perf_counter() - start
    ok = ok_a and ok_b and ok_c and elapsed < 1800
    report(6, "simulation orderings", ok,
           f"(a) zeta30>=zeta2 on {share:.0%} of top-quarter k; "
           f"(b) combined minus best single finite counts {gaps} (floor {-0.1 * n1:g}); "
           f"(c) finite {int(np.isfinite(s1).sum())} vs {int(np.isfinite(s2).sum())}, "
           f"low-k mean gain {diff:.3f}; {elapsed:.1f}s")
    assert ok


# -- 7 ------------------------------------------------------------------------


def test_null_laws_are_distribution_free(report):
    start = time.perf_counter()
    refs8 = [np.arange(8.0), np.array([3.0, -np.inf, 3.0, 0.5, 1.0, -2.0, 3.0, 7.5]),
             np.random.default_rng(7).normal(size=8)]
    cre_d = DesignSpec.cre(6, 3)
    sre_d = DesignSpec(((4, 2), (4, 2)))
    steph = (STEPH[2], STEPH[3], STEPH[4])
    joint = build_joint_null(steph, cre_d)
    families = {
        "cre identity": (RankSumStatistic(RankTransform.identity()), cre_d),
        "cre stephenson(3)": (RankSumStatistic(STEPH[3]), cre_d),
        "cre poly(6)": (RankSumStatistic(POLY[1]), cre_d),
        "cre min-p": (MinPStatistic(steph, joint.marginals), cre_d),
        "cre max-std": (MaxStdStatistic.for_design(steph, 6, 3), cre_d),
    }
    for scheme in (SCHEME1, SCHEME2):
        for comb in (SINGLE, COMBINE_THEN_AGGREGATE, AGGREGATE_THEN_COMBINE):
            spec = StratifiedStatisticSpec(POLY, (WeightScheme(scheme),), comb)
            families[f"sre {comb}/{scheme}"] = (StratifiedStatistic(spec, sre_d.strata), sre_d)
    differing = []
    for name, (stat, d) in families.items():
        laws = [build_null(stat, d, reference_y=y[: d.n]).values for y in refs8]
        if not all(np.array_equal(laws[0], law) for law in laws[1:]):
            differing.append(name)
    elapsed = time.perf_counter() - start
    ok = not differing and elapsed < 60
    report(7, "exact null laws identical across reference outcomes", ok,
           f"{len(families)} statistics x 3 vectors, differing: {differing or 'none'}, {elapsed:.1f}s")
    assert ok


# -- 8 ------------------------------------------------------------------------


def test_outputs_are_deterministic(report, tmp_path):
    rng = np.random.default_rng(8)
    rows = ["unit_id,z,y,stratum"]
    for s in range(3):
        for i, zi in enumerate(rng.permutation([1, 1, 1, 0, 0, 0])):
            # rounded outcomes leave ties for the seeded shuffle to break
            rows.append(f"u{s}_{i},{zi},{round(rng.normal() + zi, 1)},s{s}")
    data = tmp_path / "data.csv"
    data.write_text("\n".join(rows) + "\n")

    def run(args, name):
        out = tmp_path / name
        assert cli.main(args + ["--output", str(out)]) == 0
        return out.read_bytes()

    bounds_args = ["bounds", str(data), "--method", "comb1", "--transforms", "poly:2,6",
                   "--null", "mc", "--mc-draws", "500", "--seed", "13"]
    sim_args = ["simulate", "--scenario", "cre-sigma2", "--n", "16", "--reps", "4",
                "--mc-draws", "300", "--seed", "13"]
    b1, b2 = run(bounds_args, "b1.csv"), run(bounds_args, "b2.csv")
    s1, s2 = run(sim_args, "s1.csv"), run(sim_args + ["--workers", "2"], "s2.csv")
    ok = b1 == b2 and s1 == s2
    report(8, "identical seeds give byte-identical CSVs", ok,
           f"bounds {'equal' if b1 == b2 else 'differ'}, simulate (1 vs 2 workers) "
           f"{'equal' if s1 == s2 else 'differ'}")
    assert ok
