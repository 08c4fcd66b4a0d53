"""LP solver tests: spec examples, oracle agreement, structural properties."""

import math

import numpy as np
import pytest

from bnbrl.milp import make_instance
from bnbrl.oracle import enumerate_box_lp
from bnbrl.simplex import (
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    STATUS_UNBOUNDED,
    is_integral,
    solve_lp_arrays,
    solve_relaxation,
)


def test_bound_active_optimum():
    inst = make_instance("t", [-1.0], [0.0], [1.0], [], [])
    res = solve_relaxation(inst)
    assert res.status == STATUS_OPTIMAL
    assert res.point[0] == 1.0
    assert res.objective == -1.0


def test_infeasible_row():
    inst = make_instance("t", [1.0], [0.0], [1.0], [], [([(0, 1.0)], -1.0)])
    assert solve_relaxation(inst).status == STATUS_INFEASIBLE


def test_unbounded():
    inst = make_instance("t", [-1.0], [0.0], [math.inf], [], [])
    assert solve_relaxation(inst).status == STATUS_UNBOUNDED


def _random_box_lp(rng):
    n = int(rng.integers(1, 7))
    m = int(rng.integers(0, 6))
    a = np.round(rng.uniform(-3, 3, size=(m, n)), 2)
    b = np.round(rng.uniform(-4, 6, size=m), 2)
    c = np.round(rng.uniform(-5, 5, size=n), 2)
    return a, b, c, np.zeros(n), np.full(n, 4.0)


def test_against_vertex_enumeration_oracle():
    """1000 seeded random instances: status always agrees and optimal
    objectives match within 1e-6."""
    rng = np.random.default_rng(0)
    optima = 0
    for _ in range(1000):
        a, b, c, lo, hi = _random_box_lp(rng)
        ours = solve_lp_arrays(a, b, c, lo, hi)
        status, obj, _ = enumerate_box_lp(a, b, c, lo, hi)
        assert ours.status == status
        if status == STATUS_OPTIMAL:
            optima += 1
            assert abs(ours.objective - obj) <= 1e-6
    assert optima > 500  # the corpus actually exercises the solver


def test_feasibility_invariants_of_optimal_points():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b, c, lo, hi = _random_box_lp(rng)
        res = solve_lp_arrays(a, b, c, lo, hi)
        if res.status != STATUS_OPTIMAL:
            continue
        x = res.point
        if a.size:
            assert (a @ x - b).max() <= 1e-7
        assert (lo - x).max() <= 1e-7 and (x - hi).max() <= 1e-7
        assert abs(res.objective - float(c @ x)) <= 1e-7 * (1 + abs(res.objective))


def test_bound_change_never_improves_objective():
    rng = np.random.default_rng(11)
    for _ in range(300):
        a, b, c, lo, hi = _random_box_lp(rng)
        parent = solve_lp_arrays(a, b, c, lo, hi)
        if parent.status != STATUS_OPTIMAL:
            continue
        j = int(rng.integers(0, len(c)))
        hi2 = hi.copy()
        hi2[j] = math.floor(hi2[j] / 2)
        child = solve_lp_arrays(a, b, c, lo, hi2)
        if child.status == STATUS_OPTIMAL:
            assert child.objective >= parent.objective - 1e-6


def test_determinism():
    rng = np.random.default_rng(5)
    for _ in range(50):
        a, b, c, lo, hi = _random_box_lp(rng)
        r1 = solve_lp_arrays(a, b, c, lo, hi)
        r2 = solve_lp_arrays(a, b, c, lo, hi)
        assert r1.status == r2.status
        if r1.status == STATUS_OPTIMAL:
            assert np.array_equal(r1.point, r2.point)


def test_free_variables_and_negative_bounds():
    # min x0 + x1 with x0 free, x1 in [-2, 3], x0 + x1 >= -1 (as <= row)
    a = np.array([[-1.0, -1.0]])
    b = np.array([1.0])
    res = solve_lp_arrays(a, b, np.array([1.0, 1.0]),
                          np.array([-math.inf, -2.0]), np.array([math.inf, 3.0]))
    assert res.status == STATUS_OPTIMAL
    assert abs(res.objective - (-1.0)) <= 1e-9


def test_is_integral():
    inst = make_instance("t", [-3.0, -4.0], [0, 0], [1, 1], [0, 1],
                         [([(0, 1.0), (1, 1.0)], 1.5)])
    res = solve_relaxation(inst)
    assert not is_integral(res, inst)
    inst2 = make_instance("t2", [-1.0], [0.0], [1.0], [0], [])
    assert is_integral(solve_relaxation(inst2), inst2)
    # tolerance: 2.0000000001 counts as integral
    from bnbrl.simplex import LpResult

    fake = LpResult(STATUS_OPTIMAL, np.array([2.0000000001]), 2.0, 0)
    inst3 = make_instance("t3", [1.0], [0.0], [5.0], [0], [])
    assert is_integral(fake, inst3)


def test_is_integral_vacuous_without_integer_vars():
    inst = make_instance("t", [1.0], [0.0], [1.5], [], [])
    assert is_integral(solve_relaxation(inst), inst)


def test_is_integral_requires_optimal():
    inst = make_instance("t", [1.0], [0.0], [1.0], [0], [([(0, 1.0)], -1.0)])
    res = solve_relaxation(inst)
    with pytest.raises(ValueError):
        is_integral(res, inst)


def test_scipy_cross_check():
    """Extra safety net beyond the in-repo oracle (presolve off: HiGHS
    presolve conflates infeasible with unbounded)."""
    linprog = pytest.importorskip("scipy.optimize").linprog
    rng = np.random.default_rng(17)
    for _ in range(150):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(0, 6))
        a = np.round(rng.uniform(-3, 3, size=(m, n)), 2)
        b = np.round(rng.uniform(-4, 6, size=m), 2)
        c = np.round(rng.uniform(-5, 5, size=n), 2)
        lo = np.where(rng.random(n) < 0.25, -math.inf, np.round(rng.uniform(-3, 0, n), 1))
        hi = np.where(rng.random(n) < 0.25, math.inf, np.round(rng.uniform(0.5, 4, n), 1))
        ours = solve_lp_arrays(a, b, c, lo, hi)
        bounds = [(None if not math.isfinite(l) else l,
                   None if not math.isfinite(h) else h) for l, h in zip(lo, hi)]
        ref = linprog(c, A_ub=a if m else None, b_ub=b if m else None,
                      bounds=bounds, method="highs", options={"presolve": False})
        expect = {0: "optimal", 2: "infeasible", 3: "unbounded"}[ref.status]
        assert ours.status == expect
        if ref.status == 0:
            assert abs(ours.objective - ref.fun) <= 1e-6 * (1 + abs(ref.fun))
