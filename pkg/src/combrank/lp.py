"""Small dense linear programs and a branch-and-bound for stratum allocations.

The allocation problem is: pick ``j_s`` in ``0..m_s`` for every stratum with
``sum_s j_s = k`` so as to minimize

    max_h (sum_s V_s[j_s, h] - mu_h) / sigma_h .

Its LP relaxation uses indicator weights ``x_sj`` with ``sum_j x_sj = 1`` and
an epigraph variable for the max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-9
# consecutive degenerate pivots tolerated before switching to Bland's rule
_DEGENERATE_LIMIT = 25


class LPError(RuntimeError):
    pass


class InfeasibleError(LPError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    objective: float
    iterations: int


def _pivot(T, row, col):
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])


def _run_simplex(T, basis, n_cols, max_iter):
    """Minimize the objective held in the last row of tableau ``T`` in place.

    Columns ``0..n_cols-1`` may enter; the last column is the right-hand side.
    The objective row stores reduced costs; the entry at the rhs is ``-z``.
    """
    m = T.shape[0] - 1
    degenerate = 0
    for it in range(max_iter):
        red = T[-1, :n_cols]
        if degenerate >= _DEGENERATE_LIMIT:
            cand = np.flatnonzero(red < -TOL)
            if cand.size == 0:
                return it
            col = int(cand[0])
        else:
            col = int(np.argmin(red))
            if red[col] >= -TOL:
                return it
        a = T[:m, col]
        pos = a > TOL
        if not pos.any():
            raise LPError("linear program is unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / a[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + TOL * max(1.0, abs(best)))
        # smallest basic index among tied rows (Bland) keeps the choice deterministic
        row = int(ties[np.argmin(basis[ties])])
        degenerate = degenerate + 1 if best <= TOL else 0
        _pivot(T, row, col)
        basis[row] = col
    raise LPError("simplex iteration limit reached")


def linprog_eq(c, A_eq, b_eq, max_iter: int = 50_000) -> LPResult:
    """Minimize ``c @ x`` subject to ``A_eq @ x = b_eq`` and ``x >= 0``.

    Two-phase dense-tableau simplex with one artificial variable per row.
    """
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1: minimize the sum of artificials
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(n, n + m)
    iters = _run_simplex(T, basis, n + m, max_iter)
    if -T[-1, -1] > 1e-7 * max(1.0, b.sum()):
        raise InfeasibleError("linear program is infeasible")

    # drive remaining artificials out of the basis; drop redundant rows
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= n:
            cols = np.flatnonzero(np.abs(T[r, :n]) > 1e-7)
            if cols.size:
                _pivot(T, r, int(cols[0]))
                basis[r] = cols[0]
            else:
                keep[r] = False
    rows = np.flatnonzero(keep)
    T2 = np.zeros((rows.size + 1, n + 1))
    T2[:-1, :n] = T[rows, :n]
    T2[:-1, -1] = T[rows, -1]
    basis = basis[rows]
    # phase 2 objective row: reduced costs c - c_B B^-1 A
    T2[-1, :n] = c
    T2[-1, -1] = 0.0
    for r, j in enumerate(basis):
        if T2[-1, j] != 0.0:
            T2[-1] -= T2[-1, j] * T2[r]
    iters += _run_simplex(T2, basis, n, max_iter)
    x = np.zeros(n)
    x[basis] = T2[:-1, -1]
    x[np.abs(x) < 1e-12] = 0.0
    return LPResult(x, float(c @ x), iters)


@dataclass(frozen=True)
class MinimaxProblem:
    """``values[s]`` has shape ``(m_s + 1, H)``; ``mu`` and ``sigma`` have length ``H``."""

    values: tuple[np.ndarray, ...]
    mu: np.ndarray
    sigma: np.ndarray

    @classmethod
    def separable(cls, values) -> "MinimaxProblem":
        """H = 1 with no standardization: plain sum over strata."""
        vals = tuple(np.asarray(v, dtype=float).reshape(-1, 1) for v in values)
        return cls(vals, np.zeros(1), np.ones(1))

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(np.asarray(v, dtype=float) for v in self.values))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(-1))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float).reshape(-1))
        if any(v.ndim != 2 or v.shape[1] != self.mu.size for v in self.values):
            raise ValueError("value tables must have one column per statistic")
        if np.any(self.sigma <= 0):
            raise ValueError("degenerate statistic in combination")

    @property
    def capacities(self) -> np.ndarray:
        return np.array([v.shape[0] - 1 for v in self.values])

    def objective(self, alloc) -> float:
        """Exact objective of an integral allocation (sums in stratum order)."""
        tot = np.zeros(self.mu.size)
        for v, j in zip(self.values, alloc):
            tot = tot + v[int(j)]
        return float(np.max((tot - self.mu) / self.sigma))


def lp_relaxation(p: MinimaxProblem, k: int, lo=None, hi=None) -> tuple[float, list[np.ndarray]]:
    """Optimal fractional objective and per-stratum weights ``x_s`` on ``lo_s..hi_s``."""
    cap = p.capacities
    lo = np.zeros_like(cap) if lo is None else np.asarray(lo)
    hi = cap if hi is None else np.asarray(hi)
    if lo.sum() > k or hi.sum() < k:
        raise InfeasibleError("allocation budget infeasible")
    H = p.mu.size
    S = len(p.values)
    blocks = [np.arange(lo[s], hi[s] + 1) for s in range(S)]
    nx = sum(b.size for b in blocks)
    scaled = [p.values[s][blocks[s]] / p.sigma for s in range(S)]
    # lower bound for the epigraph variable so that it can be taken >= 0
    floor = float(np.max(sum(v.min(axis=0) for v in scaled) - p.mu / p.sigma)) - 1.0
    # columns: x (nx), t' (1), slacks (H)
    n = nx + 1 + H
    A = np.zeros((S + 1 + H, n))
    b = np.zeros(S + 1 + H)
    col = 0
    for s, blk in enumerate(blocks):
        w = blk.size
        A[s, col:col + w] = 1.0
        A[S, col:col + w] = blk
        A[S + 1:, col:col + w] = scaled[s].T
        col += w
    b[:S] = 1.0
    b[S] = k
    A[S + 1:, nx] = -1.0
    A[S + 1:, nx + 1:] = np.eye(H)
    b[S + 1:] = p.mu / p.sigma + floor
    cost = np.zeros(n)
    cost[nx] = 1.0
    res = linprog_eq(cost, A, b)
    xs, col = [], 0
    for blk in blocks:
        xs.append(res.x[col:col + blk.size])
        col += blk.size
    return res.objective + floor, xs


def _dp_tables(values: list[np.ndarray], k_max: int):
    """Forward DP over strata for a separable objective; returns value and choice tables."""
    f = np.full(k_max + 1, np.inf)
    f[0] = 0.0
    choices = []
    for v in values:
        m = v.size - 1
        cand = np.full((k_max + 1, m + 1), np.inf)
        for j in range(min(m, k_max) + 1):
            cand[j:, j] = f[: k_max + 1 - j] + v[j]
        choice = np.argmin(cand, axis=1)  # first minimizer: smallest j
        f = cand[np.arange(k_max + 1), choice]
        choices.append(choice)
    return f, choices


def dp_all_budgets(values) -> np.ndarray:
    """Minimum of ``sum_s values[s][j_s]`` for every budget ``0..sum_s m_s``."""
    values = [np.asarray(v, dtype=float).reshape(-1) for v in values]
    f, _ = _dp_tables(values, sum(v.size - 1 for v in values))
    return f


def dp_allocate(values, k: int) -> tuple[float, np.ndarray]:
    values = [np.asarray(v, dtype=float).reshape(-1) for v in values]
    total = sum(v.size - 1 for v in values)
    if not 0 <= k <= total:
        raise InfeasibleError(f"budget k={k} outside 0..{total}")
    f, choices = _dp_tables(values, k)
    alloc = np.zeros(len(values), dtype=int)
    b = k
    for s in range(len(values) - 1, -1, -1):
        alloc[s] = choices[s][b]
        b -= alloc[s]
    return float(f[k]), alloc


@dataclass
class BranchAndBoundResult:
    objective: float
    allocation: np.ndarray
    nodes: int
    # False when an ``accept`` predicate cut the search short (objective is then an upper bound)
    complete: bool = True


def _cut(lp_val: float) -> float:
    return lp_val - TOL * (1.0 + abs(lp_val))


def branch_and_bound(p: MinimaxProblem, k: int, max_nodes: int = 200_000, accept=None) -> BranchAndBoundResult:
    """Integral optimum by depth-first branch-and-bound on LP bounds.

    Branching takes the first stratum whose LP weights are split, cuts its range
    at the floor of the fractional allocation and explores the lower half first.
    Nodes whose bound is within ``TOL`` (relative) of the incumbent are cut, so
    the result is optimal up to that tolerance.

    ``accept`` turns the search into a decision: given a predicate that is
    nonincreasing in the objective, the search stops at the first incumbent it
    accepts and skips subtrees whose bound it rejects.  ``accept(result.objective)``
    then answers whether the optimum is accepted.
    """
    cap = p.capacities
    if not 0 <= k <= cap.sum():
        raise InfeasibleError(f"budget k={k} outside 0..{cap.sum()}")
    # incumbent from the best per-statistic DP allocation
    best_val, best_alloc = np.inf, None
    for h in range(p.mu.size):
        _, alloc = dp_allocate([v[:, h] for v in p.values], k)
        val = p.objective(alloc)
        if val < best_val:
            best_val, best_alloc = val, alloc
    if accept is not None and accept(best_val):
        return BranchAndBoundResult(float(best_val), np.asarray(best_alloc), 0, complete=False)
    stack = [(np.zeros_like(cap), cap.copy())]
    nodes = 0
    while stack:
        lo, hi = stack.pop()
        nodes += 1
        if nodes > max_nodes:
            raise LPError("branch-and-bound node limit reached")
        if lo.sum() > k or hi.sum() < k:
            continue
        if np.array_equal(lo, hi):
            alloc, split = lo, None
        else:
            lp_val, xs = lp_relaxation(p, k, lo, hi)
            # nodes that cannot improve on the incumbent by more than the LP tolerance are cut
            if lp_val >= best_val - TOL * (1.0 + abs(best_val)):
                continue
            if accept is not None and not accept(_cut(lp_val)):
                continue
            split = None
            alloc = np.empty_like(cap)
            for s, x in enumerate(xs):
                top = int(np.argmax(x))
                if x[top] > 1.0 - 1e-9:
                    alloc[s] = lo[s] + top
                elif split is None:
                    split = s
                    mean = float(np.arange(lo[s], hi[s] + 1) @ x)
                    cut = min(max(int(np.floor(mean + 1e-12)), lo[s]), hi[s] - 1)
        if split is None:
            val = p.objective(alloc)
            if val < best_val:
                best_val, best_alloc = val, alloc.copy()
                if accept is not None and accept(best_val):
                    return BranchAndBoundResult(float(best_val), np.asarray(best_alloc), nodes, complete=False)
            continue
        left_hi = hi.copy()
        left_hi[split] = cut
        right_lo = lo.copy()
        right_lo[split] = cut + 1
        stack.append((right_lo, hi))
        stack.append((lo, left_hi))
    return BranchAndBoundResult(float(best_val), np.asarray(best_alloc), nodes)
