"""Tests for instance data types, validation, and the JSON format."""

import math

import numpy as np
import pytest

from bnbrl.milp import (
    TIGHTEN_LOWER,
    TIGHTEN_UPPER,
    BoundChange,
    InstanceFormatError,
    InstanceSchemaError,
    apply_bound_change,
    eq_rows,
    geq_row,
    make_instance,
    parse_instance,
    serialize_instance,
    validate,
)


def knapsack3():
    return make_instance(
        "knap3",
        objective=[-5.0, -4.0, -3.0],
        lower=[0.0, 0.0, 0.0],
        upper=[1.0, 1.0, 1.0],
        integer_indices=[0, 1, 2],
        rows=[([(0, 2.0), (1, 3.0), (2, 1.0)], 4.0)],
    )


def test_validate_bound_crossing():
    inst = make_instance("bad", [1.0], [3.0], [1.0], [0], [])
    problems = validate(inst)
    assert any("bound crossing at var 0" in p for p in problems)


def test_validate_box_only_is_legal():
    inst = make_instance("box", [1.0, -1.0], [0.0, 0.0], [2.0, 2.0], [0], [])
    assert validate(inst) == []


def test_validate_unbounded_integer_var():
    inst = make_instance("unb", [1.0], [0.0], [math.inf], [0], [])
    assert any("unbounded integer var" in p for p in problems_of(inst))


def problems_of(inst):
    return validate(inst)


def test_validate_duplicate_row_columns():
    inst = make_instance("dup", [1.0, 1.0], [0, 0], [1, 1], [],
                         rows=[([(0, 1.0), (0, 2.0)], 1.0)])
    assert any("duplicate column indices" in p for p in validate(inst))


def test_apply_bound_change_floor_and_ceil():
    inst = make_instance("t", [0.0] * 3, [0, 0, 0], [5, 5, 5], [0, 1, 2], [])
    child = apply_bound_change(inst, BoundChange(2, TIGHTEN_UPPER, math.floor(2.5)))
    assert child.upper[2] == 2.0
    assert inst.upper[2] == 5.0  # parent untouched
    child2 = apply_bound_change(inst, BoundChange(2, TIGHTEN_LOWER, math.ceil(2.5)))
    assert child2.lower[2] == 3.0
    assert inst.lower[2] == 0.0


def test_apply_bound_change_idempotent_and_never_widens():
    inst = make_instance("t", [0.0], [0.0], [5.0], [0], [])
    same = apply_bound_change(inst, BoundChange(0, TIGHTEN_UPPER, 5.0))
    assert same == inst
    tighter = apply_bound_change(inst, BoundChange(0, TIGHTEN_UPPER, 3.0))
    widened = apply_bound_change(tighter, BoundChange(0, TIGHTEN_UPPER, 4.0))
    assert widened.upper[0] == 3.0


def test_apply_bound_change_out_of_range():
    inst = make_instance("t", [0.0], [0.0], [5.0], [0], [])
    with pytest.raises(IndexError):
        apply_bound_change(inst, BoundChange(3, TIGHTEN_UPPER, 1.0))


def test_round_trip_identity():
    inst = knapsack3()
    again = parse_instance(serialize_instance(inst))
    assert again == inst
    assert serialize_instance(again) == serialize_instance(inst)


def test_round_trip_with_infinite_bounds():
    inst = make_instance("inf", [1.0, 2.0], [-math.inf, 0.0], [math.inf, 1.0], [1], [])
    again = parse_instance(serialize_instance(inst))
    assert again == inst
    assert b'"-inf"' in serialize_instance(inst)


def test_parse_missing_field_is_schema_error():
    import json

    doc = json.loads(serialize_instance(knapsack3()))
    del doc["rows"]
    with pytest.raises(InstanceSchemaError):
        parse_instance(json.dumps(doc).encode())


def test_parse_nan_is_schema_error():
    text = serialize_instance(knapsack3()).decode().replace("-5.0", "NaN")
    with pytest.raises(InstanceSchemaError):
        parse_instance(text.encode())


def test_parse_garbage_is_format_error():
    with pytest.raises(InstanceFormatError):
        parse_instance(b"not json at all {{{")
    with pytest.raises(InstanceFormatError):
        parse_instance(b"[1, 2, 3]")


def test_serialization_is_deterministic():
    a = serialize_instance(knapsack3())
    b = serialize_instance(knapsack3())
    assert a == b
    # coefficient pairs sorted by column even if supplied unsorted
    inst = make_instance("u", [1.0, 1.0], [0, 0], [1, 1], [0],
                         rows=[([(1, 2.0), (0, 1.0)], 3.0)])
    assert inst.rows[0].cols == (0, 1)


def test_row_normalization_helpers():
    coeffs, rhs = geq_row([(0, 1.0), (1, 2.0)], 3.0)
    assert coeffs == [(0, -1.0), (1, -2.0)] and rhs == -3.0
    both = eq_rows([(0, 1.0)], 2.0)
    assert len(both) == 2
    assert both[0] == ([(0, 1.0)], 2.0)
    assert both[1] == ([(0, -1.0)], -2.0)


def test_validate_accepts_clean_instance_everywhere():
    inst = knapsack3()
    assert validate(inst) == []
    from bnbrl.simplex import solve_relaxation

    assert solve_relaxation(inst).status == "optimal"
