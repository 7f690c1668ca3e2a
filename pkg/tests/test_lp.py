import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from combrank.lp import (
    InfeasibleError,
    MinimaxProblem,
    branch_and_bound,
    dp_all_budgets,
    dp_allocate,
    linprog_eq,
    lp_relaxation,
)
from combrank.oracle import brute_allocation_sre, minimax_objective, separable_objective


def random_problem(rng, S=3, H=2, cap_max=4):
    caps = rng.integers(1, cap_max + 1, size=S)
    # rows are cumulative so values grow with j like real infimum tables
    vals = tuple(np.cumsum(rng.uniform(0, 1, size=(c + 1, H)), axis=0) for c in caps)
    mu = rng.normal(size=H)
    sigma = rng.uniform(0.5, 2.0, size=H)
    return MinimaxProblem(vals, mu, sigma)


def test_simplex_small_known_problem():
    # min -x0 - x1  s.t. x0 + x1 + s = 1
    res = linprog_eq(np.array([-1.0, -1.0, 0.0]), np.array([[1.0, 1.0, 1.0]]), np.array([1.0]))
    assert res.objective == pytest.approx(-1.0)


def test_simplex_infeasible():
    with pytest.raises(InfeasibleError):
        linprog_eq(np.array([1.0, 1.0]), np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 2.0]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_simplex_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    m, n = 3, 6
    A = rng.uniform(0, 1, size=(m, n))
    x0 = rng.uniform(0, 1, size=n)
    b = A @ x0
    c = rng.normal(size=n)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=[(0, 10)] * n, method="highs")
    # add the upper bounds as slack rows so both solve the same problem
    A2 = np.block([[A, np.zeros((m, n))], [np.eye(n), np.eye(n)]])
    b2 = np.concatenate([b, np.full(n, 10.0)])
    ours = linprog_eq(np.concatenate([c, np.zeros(n)]), A2, b2)
    assert ours.objective == pytest.approx(ref.fun, rel=1e-7, abs=1e-7)


def test_lp_relaxation_matches_scipy():
    rng = np.random.default_rng(11)
    for _ in range(20):
        p = random_problem(rng)
        k = int(rng.integers(0, p.capacities.sum() + 1))
        ours, xs = lp_relaxation(p, k)
        # scipy formulation: variables x_sj then t
        sizes = [v.shape[0] for v in p.values]
        nv = sum(sizes)
        c = np.zeros(nv + 1)
        c[-1] = 1.0
        A_ub, b_ub = [], []
        for h in range(p.mu.size):
            row = np.concatenate([v[:, h] for v in p.values]) / p.sigma[h]
            A_ub.append(np.concatenate([row, [-1.0]]))
            b_ub.append(p.mu[h] / p.sigma[h])
        A_eq, b_eq, off = [], [], 0
        for sz in sizes:
            r = np.zeros(nv + 1)
            r[off:off + sz] = 1.0
            A_eq.append(r)
            b_eq.append(1.0)
            off += sz
        A_eq.append(np.concatenate([np.concatenate([np.arange(sz) for sz in sizes]), [0.0]]))
        b_eq.append(k)
        ref = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=[(0, None)] * nv + [(None, None)], method="highs")
        assert ours == pytest.approx(ref.fun, rel=1e-7, abs=1e-7)
        assert all(x.sum() == pytest.approx(1.0) for x in xs)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6))
def test_branch_and_bound_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, S=int(rng.integers(1, 5)), H=int(rng.integers(1, 4)))
    f = minimax_objective(p.values, p.mu, p.sigma)
    for k in range(p.capacities.sum() + 1):
        res = branch_and_bound(p, k)
        assert res.complete
        best = brute_allocation_sre(p.values, k, f)
        assert res.objective == pytest.approx(best, rel=1e-9, abs=1e-9)
        assert sum(res.allocation) == k
        lp_val, _ = lp_relaxation(p, k)
        assert lp_val <= best + 1e-9 * (1 + abs(best))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_dp_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    S = int(rng.integers(1, 5))
    vals = [rng.normal(size=int(rng.integers(1, 6))) for _ in range(S)]
    f = dp_all_budgets(vals)
    obj = separable_objective(vals)
    for k in range(sum(v.size - 1 for v in vals) + 1):
        assert f[k] == brute_allocation_sre(vals, k, obj)
        val, alloc = dp_allocate(vals, k)
        assert val == f[k] and int(alloc.sum()) == k
        assert obj(alloc) == val


def test_dp_infeasible_budget():
    with pytest.raises(InfeasibleError):
        dp_allocate([np.zeros(2), np.zeros(3)], 4)


def test_branch_and_bound_decision_mode_agrees_with_full_solve():
    rng = np.random.default_rng(5)
    for _ in range(30):
        p = random_problem(rng, S=4, H=3)
        k = int(rng.integers(0, p.capacities.sum() + 1))
        full = branch_and_bound(p, k).objective
        for thr in (full - 0.5, full - 1e-6, full + 1e-6, full + 0.5):
            # the predicate must be nonincreasing in the objective
            dec = branch_and_bound(p, k, accept=lambda x, t=thr: x <= t)
            assert (dec.objective <= thr) == (full <= thr)


def test_separable_problem_has_unit_scaling():
    p = MinimaxProblem.separable([np.arange(3.0), np.arange(2.0)])
    assert p.objective((2, 1)) == 3.0
    assert list(p.capacities) == [2, 1]
