"""Exact linear sum and linear bottleneck assignment.

Both solvers return a permutation ``sigma`` as a tuple of 0-based column
indices (row ``i`` is matched to column ``sigma[i]``) together with the
optimal objective value.  Ties are broken deterministically: the
lexicographically smallest optimal ``sigma`` for sums; for bottlenecks the
smallest total sum first, then lexicographic order.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import AssignmentSizeError, InputError, NumericalError

BRUTE_FORCE_MAX = 9


def _check_cost(cost, square=True) -> np.ndarray:
    C = np.asarray(cost, dtype=float)
    if C.size == 0:
        C = C.reshape(0, 0)
    if C.ndim != 2:
        raise InputError(f"cost must be a matrix, got shape {C.shape}")
    if square and C.shape[0] != C.shape[1]:
        raise InputError(f"cost matrix must be square, got {C.shape}; pad it first")
    if not np.all(np.isfinite(C)):
        raise InputError("cost entries must be finite")
    if np.any(C < 0):
        raise InputError("cost entries must be nonnegative")
    return C


def _hungarian(C: np.ndarray) -> np.ndarray:
    """Shortest augmenting path with row/column potentials, O(n^3).

    ``C`` may contain ``inf`` for forbidden pairs.  Returns ``col_of_row``.
    """
    n = C.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            with np.errstate(invalid="ignore"):
                cur = C[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            if not np.isfinite(delta):
                raise NumericalError("assignment problem has no feasible perfect matching")
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row


def _row_sum(C, sigma) -> float:
    return sum(C[i, j] for i, j in enumerate(sigma))


def _lexicographic_optimum(C: np.ndarray) -> tuple[int, ...]:
    """Lexicographically smallest permutation attaining the minimum sum."""
    n = C.shape[0]
    if n == 0:
        return ()
    # Sums are compared exactly, in row order, as the brute-force oracle does.
    # ``best_perm`` always extends the fixed prefix, so its own column is an
    # admissible fallback at every row.
    best_perm = [int(c) for c in _hungarian(C)]
    best = _row_sum(C, best_perm)
    sigma = []
    cols = list(range(n))
    for i in range(n):
        rest_rows = list(range(i + 1, n))
        for j in sorted(cols):
            if not np.isfinite(C[i, j]):
                continue
            rest_cols = [c for c in cols if c != j]
            candidates = []
            if j == best_perm[i]:
                candidates.append(best_perm)
            if rest_rows:
                try:
                    sub_sigma = _hungarian(C[np.ix_(rest_rows, rest_cols)])
                except NumericalError:
                    sub_sigma = None
                if sub_sigma is not None:
                    candidates.append(sigma + [j] + [rest_cols[k] for k in sub_sigma])
            else:
                candidates.append(sigma + [j])
            scored = [(_row_sum(C, p), p) for p in candidates]
            scored = [(s, p) for s, p in scored if s <= best]
            if scored:
                best, best_perm = min(scored, key=lambda sp: sp[0])
                sigma.append(j)
                cols.remove(j)
                break
    return tuple(sigma)


def solve_lsap(cost) -> tuple[tuple[int, ...], float]:
    """Minimise ``sum_i cost[i, sigma(i)]`` over permutations."""
    C = _check_cost(cost)
    sigma = _lexicographic_optimum(C)
    return sigma, float(_row_sum(C, sigma))


def _has_perfect_matching(allowed: np.ndarray) -> bool:
    n = allowed.shape[0]
    match_col = [-1] * n
    adj = [np.flatnonzero(allowed[i]).tolist() for i in range(n)]

    def augment(i, seen):
        for j in adj[i]:
            if not seen[j]:
                seen[j] = True
                if match_col[j] < 0 or augment(match_col[j], seen):
                    match_col[j] = i
                    return True
        return False

    return all(augment(i, [False] * n) for i in range(n))


def solve_lbap(cost) -> tuple[tuple[int, ...], float]:
    """Minimise ``max_i cost[i, sigma(i)]`` over permutations.

    Threshold search over the sorted distinct entries with a bipartite
    matching feasibility test; ties resolved by minimum sum, then
    lexicographically.
    """
    C = _check_cost(cost)
    n = C.shape[0]
    if n == 0:
        return (), 0.0
    values = np.unique(C)
    lo, hi = 0, len(values) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _has_perfect_matching(C <= values[mid]):
            hi = mid
        else:
            lo = mid + 1
    threshold = values[lo]
    masked = np.where(C <= threshold, C, np.inf)
    sigma = _lexicographic_optimum(masked)
    return sigma, float(max(C[i, j] for i, j in enumerate(sigma)))


def brute_force_assignment(cost, objective: str = "sum") -> tuple[tuple[int, ...], float]:
    """Exhaustive optimum over all permutations (test oracle, size <= 9)."""
    C = _check_cost(cost)
    n = C.shape[0]
    if n > BRUTE_FORCE_MAX:
        raise AssignmentSizeError(f"brute force refused for {n}x{n} ({math.factorial(n)} permutations)")
    if objective not in ("sum", "bottleneck"):
        raise InputError(f"objective must be 'sum' or 'bottleneck', got {objective!r}")
    if n == 0:
        return (), 0.0
    best_key, best_sigma = None, ()
    for sigma in itertools.permutations(range(n)):
        entries = [C[i, j] for i, j in enumerate(sigma)]
        total = sum(entries)
        key = (total,) if objective == "sum" else (max(entries), total)
        if best_key is None or key < best_key:
            best_key, best_sigma = key, sigma
    return tuple(best_sigma), float(best_key[0])
