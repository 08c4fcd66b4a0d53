"""Brute-force oracles: LP vertex enumeration and exhaustive MILP search.

These deliberately avoid the simplex pivot path and the branch-and-bound
engine so they can serve as independent ground truth in tests and in the
`verify` suites. The only shared code is the LP solver itself when a
mixed-integer instance needs its continuous part optimized after fixing
the integer variables.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .milp import MilpInstance
from .simplex import EPS_FEAS, STATUS_OPTIMAL, solve_lp_arrays


class EnumerationCapExceeded(RuntimeError):
    """The integer grid is larger than the requested enumeration cap."""


def enumerate_box_lp(a_mat: np.ndarray, b: np.ndarray, c: np.ndarray,
                     lo: np.ndarray, hi: np.ndarray,
                     feas_tol: float = EPS_FEAS) -> tuple[str, float | None, np.ndarray | None]:
    """Minimize c.x over {a_mat x <= b, lo <= x <= hi} by enumerating basic
    points: every square subsystem of active constraints drawn from rows and
    bound facets. Requires a finite box so the feasible set is a polytope
    and the optimum (if any) sits on a vertex.

    Returns ("optimal", obj, x) or ("infeasible", None, None).
    """
    m, n = a_mat.shape
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
        raise ValueError("vertex enumeration needs a finite box")

    # Stack rows and bound facets as equalities to activate: G x = g.
    g_mat = np.vstack([a_mat, np.eye(n), -np.eye(n)]) if m else np.vstack([np.eye(n), -np.eye(n)])
    g_rhs = np.concatenate([b, hi, -lo]) if m else np.concatenate([hi, -lo])

    best_obj = None
    best_x = None
    for active in itertools.combinations(range(g_mat.shape[0]), n):
        sub = g_mat[list(active)]
        rhs = g_rhs[list(active)]
        try:
            x = np.linalg.solve(sub, rhs)
        except np.linalg.LinAlgError:
            continue
        if m and (a_mat @ x - b > feas_tol).any():
            continue
        if (lo - x > feas_tol).any() or (x - hi > feas_tol).any():
            continue
        obj = float(np.dot(c, x))
        if best_obj is None or obj < best_obj:
            best_obj = obj
            best_x = x
    if best_obj is None:
        return "infeasible", None, None
    return "optimal", best_obj, best_x


@dataclass(frozen=True)
class BruteForceResult:
    feasible: bool
    objective: float | None
    point: np.ndarray | None
    enumerated: int


def integer_grid_size(instance: MilpInstance) -> int:
    size = 1
    for j in instance.integer_indices:
        size *= int(instance.upper[j] - instance.lower[j]) + 1
    return size


def brute_force_optimum(instance: MilpInstance, cap: int = 1 << 21) -> BruteForceResult:
    """Enumerate every integer assignment; pure-integer instances are checked
    directly (vectorized), mixed ones fix the integers and solve the
    continuous LP over the remaining variables.
    """
    grid = integer_grid_size(instance)
    if grid > cap:
        raise EnumerationCapExceeded(f"grid size {grid} exceeds cap {cap}")

    n = instance.num_vars
    int_idx = list(instance.integer_indices)
    cont_idx = [j for j in range(n) if j not in set(int_idx)]

    if not cont_idx:
        return _brute_force_pure_integer(instance, grid)

    a_full = instance.dense_matrix()
    b_full = instance.rhs_vector()
    c = instance.objective
    a_int = a_full[:, int_idx] if int_idx else np.zeros((len(instance.rows), 0))
    a_cont = a_full[:, cont_idx]
    ranges = [
        range(int(instance.lower[j]), int(instance.upper[j]) + 1) for j in int_idx
    ]
    best_obj = None
    best_x = None
    count = 0
    for combo in itertools.product(*ranges) if ranges else [()]:
        count += 1
        xi = np.array(combo, dtype=np.float64)
        rhs = b_full - (a_int @ xi if int_idx else 0.0)
        res = solve_lp_arrays(
            a_cont, rhs, c[cont_idx],
            instance.lower[cont_idx], instance.upper[cont_idx],
        )
        if res.status != STATUS_OPTIMAL:
            continue
        obj = float(np.dot(c[int_idx], xi)) + res.objective
        if best_obj is None or obj < best_obj:
            best_obj = obj
            x = np.empty(n)
            x[int_idx] = xi
            x[cont_idx] = res.point
            best_x = x
    if best_obj is None:
        return BruteForceResult(False, None, None, count)
    return BruteForceResult(True, best_obj, best_x, count)


def _brute_force_pure_integer(instance: MilpInstance, grid: int) -> BruteForceResult:
    """Vectorized enumeration when every variable is integer."""
    n = instance.num_vars
    spans = [int(instance.upper[j] - instance.lower[j]) + 1 for j in range(n)]
    cols = []
    rep = 1
    for j in range(n - 1, -1, -1):
        vals = np.arange(spans[j], dtype=np.float64) + instance.lower[j]
        tile = grid // (spans[j] * rep)
        cols.append(np.tile(np.repeat(vals, rep), tile))
        rep *= spans[j]
    points = np.column_stack(list(reversed(cols)))

    feasible = np.ones(grid, dtype=bool)
    for row in instance.rows:
        lhs = np.zeros(grid)
        for c_idx, coeff in zip(row.cols, row.coeffs):
            lhs += coeff * points[:, c_idx]
        feasible &= lhs <= row.rhs + EPS_FEAS
    if not feasible.any():
        return BruteForceResult(False, None, None, grid)
    objs = points @ instance.objective
    objs[~feasible] = math.inf
    best = int(np.argmin(objs))
    return BruteForceResult(True, float(objs[best]), points[best].copy(), grid)
