"""Bounded-variable primal simplex for LP relaxations.

Solves min c.x s.t. A x <= b, lo <= x <= hi with a dense tableau:
slack variables extend the system to equality form, a Phase-1 artificial
objective restores feasibility when the slack basis is not feasible, and
pricing runs Dantzig rules with a permanent switch to Bland's rule after
3*(n+m) iterations as the anti-cycling fallback.

Nonbasic variables rest at one of their finite bounds (or at zero when
free); the ratio test accounts for both the entering variable's opposite
bound (bound flip) and basic variables hitting either bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .milp import MilpInstance

EPS_FEAS = 1e-7
EPS_INT = 1e-6

# Kernel status codes.
_OPTIMAL, _INFEASIBLE, _UNBOUNDED, _ITER_LIMIT = 0, 1, 2, 3

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"

_DTOL = 1e-9  # reduced-cost eligibility
_PTOL = 1e-9  # minimum pivot magnitude in the ratio test
_RTOL = 1e-9  # tie window in the ratio test


class SimplexError(RuntimeError):
    pass


class SimplexIterationError(SimplexError):
    """Iteration cap hit: numerical cycling despite Bland's rule."""


class SimplexNumericalError(SimplexError):
    """Returned point failed the final feasibility re-check."""


@dataclass(frozen=True)
class LpResult:
    status: str
    point: np.ndarray | None
    objective: float | None
    iterations: int


@njit(cache=True)
def _iterate(tab, xb, basis, vstat, lo, hi, cost, it_start, max_iter, bland_after):
    """Run simplex iterations in place until optimal/unbounded/limit.

    vstat: 0 nonbasic at lower, 1 nonbasic at upper, 2 nonbasic free (at 0),
    3 basic. Returns (status, iterations_done).
    """
    m, big_n = tab.shape
    inf = np.inf
    it = it_start
    cb = np.empty(m)
    wv = np.empty(m)
    while True:
        if it >= max_iter:
            return _ITER_LIMIT, it
        bland = it >= bland_after

        for i in range(m):
            cb[i] = cost[basis[i]]

        # Pricing: pick the entering variable q and its direction sigma.
        q = -1
        sigma = 1.0
        best = _DTOL
        for j in range(big_n):
            st = vstat[j]
            if st == 3 or hi[j] - lo[j] <= 0.0:
                continue
            d = cost[j]
            for i in range(m):
                d -= cb[i] * tab[i, j]
            if st == 0:
                if d < -_DTOL:
                    if bland:
                        q = j
                        sigma = 1.0
                        break
                    if -d > best:
                        best = -d
                        q = j
                        sigma = 1.0
            elif st == 1:
                if d > _DTOL:
                    if bland:
                        q = j
                        sigma = -1.0
                        break
                    if d > best:
                        best = d
                        q = j
                        sigma = -1.0
            else:  # free at zero
                if d < -_DTOL or d > _DTOL:
                    if bland:
                        q = j
                        sigma = 1.0 if d < 0 else -1.0
                        break
                    if abs(d) > best:
                        best = abs(d)
                        q = j
                        sigma = 1.0 if d < 0 else -1.0
        if q == -1:
            return _OPTIMAL, it

        for i in range(m):
            wv[i] = tab[i, q]

        # Ratio test: entering variable's own range vs basic variables'
        # blocking bounds along x_B(t) = x_B - t*sigma*w.
        t_own = hi[q] - lo[q]
        t_row = inf
        r_piv = -1
        r_piv_mag = 0.0
        for i in range(m):
            d_i = sigma * wv[i]
            t_i = inf
            if d_i > _PTOL:
                bnd = lo[basis[i]]
                if bnd > -inf:
                    t_i = (xb[i] - bnd) / d_i
            elif d_i < -_PTOL:
                bnd = hi[basis[i]]
                if bnd < inf:
                    t_i = (bnd - xb[i]) / (-d_i)
            if t_i == inf:
                continue
            if t_i < 0.0:
                t_i = 0.0
            if t_i < t_row - _RTOL:
                t_row = t_i
                r_piv = i
                r_piv_mag = abs(wv[i])
            elif t_i <= t_row + _RTOL and r_piv >= 0:
                if bland:
                    if basis[i] < basis[r_piv]:
                        r_piv = i
                        r_piv_mag = abs(wv[i])
                else:
                    mag = abs(wv[i])
                    if mag > r_piv_mag or (mag == r_piv_mag and basis[i] < basis[r_piv]):
                        r_piv = i
                        r_piv_mag = mag

        if t_own == inf and t_row == inf:
            return _UNBOUNDED, it

        it += 1
        if t_own <= t_row:
            # Bound flip: q jumps to its opposite bound, basis unchanged.
            for i in range(m):
                xb[i] -= sigma * t_own * wv[i]
            vstat[q] = 1 - vstat[q]
            continue

        t = t_row
        r = r_piv
        if vstat[q] == 0:
            vq = lo[q]
        elif vstat[q] == 1:
            vq = hi[q]
        else:
            vq = 0.0
        vq += sigma * t

        for i in range(m):
            xb[i] -= sigma * t * wv[i]
        p = basis[r]
        vstat[p] = 0 if sigma * wv[r] > 0.0 else 1

        piv = tab[r, q]
        inv_piv = 1.0 / piv
        for jj in range(big_n):
            tab[r, jj] *= inv_piv
        tab[r, q] = 1.0
        for i in range(m):
            if i == r:
                continue
            f = tab[i, q]
            if f != 0.0:
                for jj in range(big_n):
                    tab[i, jj] -= f * tab[r, jj]
                tab[i, q] = 0.0
        xb[r] = vq
        basis[r] = q
        vstat[q] = 3


@njit(cache=True)
def _solve_kernel(a_mat, b, c, lo_s, hi_s, max_iter, bland_after):
    """Full two-phase solve; returns (status, x, iterations)."""
    m, n = a_mat.shape
    inf = np.inf

    # Start structural variables at a finite bound (or zero when free).
    x0 = np.empty(n)
    for j in range(n):
        if lo_s[j] > -inf:
            x0[j] = lo_s[j]
        elif hi_s[j] < inf:
            x0[j] = hi_s[j]
        else:
            x0[j] = 0.0

    resid = np.empty(m)
    n_art = 0
    for i in range(m):
        s = b[i]
        for j in range(n):
            s -= a_mat[i, j] * x0[j]
        resid[i] = s
        if s < 0.0:
            n_art += 1

    big_n = n + m + n_art
    lo = np.empty(big_n)
    hi = np.empty(big_n)
    for j in range(n):
        lo[j] = lo_s[j]
        hi[j] = hi_s[j]
    for j in range(n, big_n):
        lo[j] = 0.0
        hi[j] = inf

    vstat = np.zeros(big_n, dtype=np.int64)
    for j in range(n):
        if lo_s[j] > -inf:
            vstat[j] = 0
        elif hi_s[j] < inf:
            vstat[j] = 1
        else:
            vstat[j] = 2

    tab = np.zeros((m, big_n))
    xb = np.empty(m)
    basis = np.empty(m, dtype=np.int64)
    k = 0
    for i in range(m):
        if resid[i] >= 0.0:
            for j in range(n):
                tab[i, j] = a_mat[i, j]
            tab[i, n + i] = 1.0
            basis[i] = n + i
            vstat[n + i] = 3
            xb[i] = resid[i]
        else:
            art = n + m + k
            k += 1
            for j in range(n):
                tab[i, j] = -a_mat[i, j]
            tab[i, n + i] = -1.0
            tab[i, art] = 1.0
            basis[i] = art
            vstat[art] = 3
            vstat[n + i] = 0
            xb[i] = -resid[i]

    iters = 0
    if n_art > 0:
        cost1 = np.zeros(big_n)
        for j in range(n + m, big_n):
            cost1[j] = 1.0
        status, iters = _iterate(tab, xb, basis, vstat, lo, hi, cost1, 0, max_iter, bland_after)
        if status != _OPTIMAL:
            return status, x0, iters
        infeas = 0.0
        for i in range(m):
            if basis[i] >= n + m:
                infeas += xb[i]
        if infeas > EPS_FEAS:
            return _INFEASIBLE, x0, iters
        # Freeze artificials at zero for phase 2.
        for j in range(n + m, big_n):
            hi[j] = 0.0

    cost2 = np.zeros(big_n)
    for j in range(n):
        cost2[j] = c[j]
    status, iters = _iterate(tab, xb, basis, vstat, lo, hi, cost2, iters, max_iter, bland_after)

    x = np.empty(n)
    for j in range(n):
        if vstat[j] == 0:
            x[j] = lo[j]
        elif vstat[j] == 1:
            x[j] = hi[j]
        else:
            x[j] = 0.0
    for i in range(m):
        pos = basis[i]
        if pos < n:
            x[pos] = xb[i]
    return status, x, iters


def _solve_box_only(c, lo, hi) -> LpResult:
    """m == 0 special case: optimum sits on the box."""
    n = c.shape[0]
    x = np.empty(n)
    for j in range(n):
        if c[j] > 0.0:
            if not np.isfinite(lo[j]):
                return LpResult(STATUS_UNBOUNDED, None, None, 0)
            x[j] = lo[j]
        elif c[j] < 0.0:
            if not np.isfinite(hi[j]):
                return LpResult(STATUS_UNBOUNDED, None, None, 0)
            x[j] = hi[j]
        else:
            if np.isfinite(lo[j]):
                x[j] = lo[j]
            elif np.isfinite(hi[j]):
                x[j] = hi[j]
            else:
                x[j] = 0.0
    return LpResult(STATUS_OPTIMAL, x, float(np.dot(c, x)), 0)


def solve_lp_arrays(a_mat: np.ndarray, b: np.ndarray, c: np.ndarray,
                    lo: np.ndarray, hi: np.ndarray) -> LpResult:
    """Solve min c.x s.t. a_mat x <= b, lo <= x <= hi given dense arrays."""
    m, n = a_mat.shape
    for j in range(n):
        if lo[j] > hi[j]:
            return LpResult(STATUS_INFEASIBLE, None, None, 0)
    if m == 0:
        return _solve_box_only(c, lo, hi)

    max_iter = 50 * (n + m)
    bland_after = 3 * (n + m)
    status, x, iters = _solve_kernel(
        np.ascontiguousarray(a_mat, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        np.ascontiguousarray(c, dtype=np.float64),
        np.ascontiguousarray(lo, dtype=np.float64),
        np.ascontiguousarray(hi, dtype=np.float64),
        max_iter,
        bland_after,
    )
    if status == _ITER_LIMIT:
        raise SimplexIterationError(f"no convergence within {max_iter} iterations")
    if status == _INFEASIBLE:
        return LpResult(STATUS_INFEASIBLE, None, None, iters)
    if status == _UNBOUNDED:
        return LpResult(STATUS_UNBOUNDED, None, None, iters)

    resid = a_mat @ x - b
    if resid.size and resid.max() > EPS_FEAS:
        raise SimplexNumericalError(f"optimal point violates rows by {resid.max():.3e}")
    if ((lo - x) > EPS_FEAS).any() or ((x - hi) > EPS_FEAS).any():
        raise SimplexNumericalError("optimal point violates variable bounds")
    return LpResult(STATUS_OPTIMAL, x, float(np.dot(c, x)), iters)


def solve_relaxation(instance: MilpInstance) -> LpResult:
    """Solve the LP relaxation (integrality dropped, bounds kept)."""
    return solve_lp_arrays(
        instance.dense_matrix(),
        instance.rhs_vector(),
        instance.objective,
        instance.lower,
        instance.upper,
    )


def is_integral(result: LpResult, instance: MilpInstance) -> bool:
    """True iff every integer variable of an optimal point is within EPS_INT
    of an integer."""
    if result.status != STATUS_OPTIMAL:
        raise ValueError("is_integral requires an optimal LP result")
    x = result.point
    for j in instance.integer_indices:
        if abs(x[j] - round(x[j])) > EPS_INT:
            return False
    return True
