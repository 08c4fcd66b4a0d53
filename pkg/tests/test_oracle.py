"""Brute-force oracle tests."""

import numpy as np
import pytest

from bnbrl.milp import make_instance
from bnbrl.oracle import (
    BruteForceResult,
    EnumerationCapExceeded,
    brute_force_optimum,
    integer_grid_size,
)


def test_pure_binary_knapsack_enumerates_all():
    # 8 items, one capacity row
    rng = np.random.default_rng(0)
    w = rng.integers(1, 10, size=8).astype(float)
    p = rng.integers(1, 10, size=8).astype(float)
    inst = make_instance("k8", list(-p), [0.0] * 8, [1.0] * 8, range(8),
                         [([(j, w[j]) for j in range(8)], float(w.sum() // 2))])
    res = brute_force_optimum(inst)
    assert res.enumerated == 256
    assert res.feasible
    # verify against a direct loop
    best = 0.0
    for mask in range(256):
        x = np.array([(mask >> j) & 1 for j in range(8)], dtype=float)
        if w @ x <= w.sum() // 2:
            best = min(best, float(-p @ x))
    assert res.objective == best


def test_infeasible_instance_has_no_solution():
    inst = make_instance("inf", [1.0, 1.0], [0, 0], [1, 1], [0, 1],
                         [([(0, 1.0), (1, 1.0)], -1.0)])
    res = brute_force_optimum(inst)
    assert not res.feasible
    assert res.objective is None


def test_cap_exceeded():
    inst = make_instance("big", [0.0] * 30, [0] * 30, [1] * 30, range(30), [])
    assert integer_grid_size(inst) == 2 ** 30
    with pytest.raises(EnumerationCapExceeded):
        brute_force_optimum(inst, cap=1 << 20)


def test_mixed_integer_fixes_and_solves_lp():
    # min -x0 - 2 y  with x0 binary, y in [0, 1.5], x0 + y <= 2
    inst = make_instance("mix", [-1.0, -2.0], [0.0, 0.0], [1.0, 1.5], [0],
                         [([(0, 1.0), (1, 1.0)], 2.0)])
    res = brute_force_optimum(inst)
    assert res.feasible
    # x0=1, y=1 -> -3; x0=0, y=1.5 -> -3: optimum -3
    assert abs(res.objective - (-3.0)) <= 1e-9


def test_agrees_with_bnb_in_both_directions():
    from bnbrl import engine as eng
    from bnbrl.generators import generate, preset_with_seed

    for seed in range(10):
        inst = generate(preset_with_seed("tiny-comb_auction", seed))
        truth = brute_force_optimum(inst)
        rep = eng.solve(inst, eng.RandomBranching(), eng.NodeSelection(), seed=seed)
        if truth.feasible:
            assert rep.objective == truth.objective
        else:
            assert rep.objective is None
