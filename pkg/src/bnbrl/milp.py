"""MILP problem data: instances, bound refinements, feasible assignments.

An instance is `min c.x  s.t.  A x <= b,  l <= x <= u,  x_j integer for j in I`.
All constraint rows are stored in <= form; helpers below normalize >= and =
rows when building instances programmatically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

# Tolerance for exact-arithmetic checks on instance data (stricter than the
# LP solver's feasibility tolerance on purpose).
EPS_NUM = 1e-9

TIGHTEN_UPPER = "tighten_upper"
TIGHTEN_LOWER = "tighten_lower"


class InstanceFormatError(ValueError):
    """Document is not valid JSON or not a JSON object."""


class InstanceSchemaError(ValueError):
    """Document is JSON but violates the instance schema."""


@dataclass(frozen=True)
class SparseRow:
    """One <= constraint row: sum(coeffs[k] * x[cols[k]]) <= rhs."""

    cols: tuple[int, ...]
    coeffs: tuple[float, ...]
    rhs: float

    def dot(self, x: np.ndarray) -> float:
        s = 0.0
        for c, a in zip(self.cols, self.coeffs):
            s += a * x[c]
        return s


@dataclass(frozen=True)
class MilpInstance:
    name: str
    num_vars: int
    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integer_indices: tuple[int, ...]
    rows: tuple[SparseRow, ...]

    @property
    def num_cons(self) -> int:
        return len(self.rows)

    def dense_matrix(self) -> np.ndarray:
        """Dense m x n copy of the constraint matrix."""
        a = np.zeros((self.num_cons, self.num_vars))
        for i, row in enumerate(self.rows):
            for c, v in zip(row.cols, row.coeffs):
                a[i, c] = v
        return a

    def rhs_vector(self) -> np.ndarray:
        return np.array([r.rhs for r in self.rows], dtype=np.float64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MilpInstance):
            return NotImplemented
        return (
            self.name == other.name
            and self.num_vars == other.num_vars
            and np.array_equal(self.objective, other.objective)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
            and self.integer_indices == other.integer_indices
            and self.rows == other.rows
        )


@dataclass(frozen=True)
class Assignment:
    """A feasible point and its objective value (the incumbent, when stored
    on a search tree; its objective is the global upper bound)."""

    values: np.ndarray
    objective_value: float


@dataclass(frozen=True)
class BoundChange:
    """A single bound refinement applied when branching (x_var <= value or
    x_var >= value)."""

    var: int
    direction: str  # TIGHTEN_UPPER | TIGHTEN_LOWER
    value: float


def make_instance(
    name: str,
    objective,
    lower,
    upper,
    integer_indices,
    rows: list[tuple[list[tuple[int, float]], float]] | None = None,
) -> MilpInstance:
    """Build an instance from plain Python data; rows are <= constraints
    given as ([(col, coeff), ...], rhs)."""
    objective = np.asarray(objective, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    packed = []
    for coeffs, rhs in rows or []:
        coeffs = sorted(coeffs, key=lambda p: p[0])
        packed.append(
            SparseRow(
                cols=tuple(int(c) for c, _ in coeffs),
                coeffs=tuple(float(v) for _, v in coeffs),
                rhs=float(rhs),
            )
        )
    return MilpInstance(
        name=name,
        num_vars=int(objective.shape[0]),
        objective=objective,
        lower=lower,
        upper=upper,
        integer_indices=tuple(sorted(int(j) for j in integer_indices)),
        rows=tuple(packed),
    )


def geq_row(coeffs: list[tuple[int, float]], rhs: float) -> tuple[list[tuple[int, float]], float]:
    """Normalize a >= row to <= form by negation."""
    return [(c, -v) for c, v in coeffs], -rhs


def eq_rows(coeffs: list[tuple[int, float]], rhs: float) -> list[tuple[list[tuple[int, float]], float]]:
    """Split an = row into a <= and a normalized >= row."""
    return [(list(coeffs), rhs), geq_row(coeffs, rhs)]


def validate(instance: MilpInstance) -> list[str]:
    """Return every invariant violation as a human-readable string; an empty
    list means the instance is well-formed."""
    problems: list[str] = []
    n = instance.num_vars
    for arr, label in (
        (instance.objective, "objective"),
        (instance.lower, "lower"),
        (instance.upper, "upper"),
    ):
        if arr.shape != (n,):
            problems.append(f"{label} has length {arr.shape}, expected {n}")
        if np.isnan(arr).any():
            problems.append(f"{label} contains NaN")
    if np.isinf(instance.objective).any():
        problems.append("objective contains infinite coefficients")
    for j in range(n):
        if instance.lower[j] > instance.upper[j]:
            problems.append(f"bound crossing at var {j}")
    seen = set()
    for j in instance.integer_indices:
        if j in seen:
            problems.append(f"duplicate integer index {j}")
        seen.add(j)
        if not 0 <= j < n:
            problems.append(f"integer index {j} out of range")
            continue
        if not (math.isfinite(instance.lower[j]) and math.isfinite(instance.upper[j])):
            problems.append(f"unbounded integer var {j}")
    for i, row in enumerate(instance.rows):
        if len(row.cols) != len(row.coeffs):
            problems.append(f"row {i} has mismatched cols/coeffs lengths")
        if len(set(row.cols)) != len(row.cols):
            problems.append(f"row {i} has duplicate column indices")
        for c in row.cols:
            if not 0 <= c < n:
                problems.append(f"row {i} references column {c} out of range")
        if any(not math.isfinite(v) for v in row.coeffs) or not math.isfinite(row.rhs):
            problems.append(f"row {i} has non-finite coefficient or rhs")
    return problems


def apply_bound_change(instance: MilpInstance, change: BoundChange) -> MilpInstance:
    """Return a child instance with one bound tightened; the parent is left
    untouched and a change that would widen the bound is a no-op."""
    if not 0 <= change.var < instance.num_vars:
        raise IndexError(f"bound change var {change.var} out of range")
    if change.direction == TIGHTEN_UPPER:
        upper = instance.upper.copy()
        upper[change.var] = min(upper[change.var], change.value)
        return replace(instance, upper=upper)
    if change.direction == TIGHTEN_LOWER:
        lower = instance.lower.copy()
        lower[change.var] = max(lower[change.var], change.value)
        return replace(instance, lower=lower)
    raise ValueError(f"unknown bound change direction {change.direction!r}")


def apply_bound_changes(instance: MilpInstance, changes) -> MilpInstance:
    lower = instance.lower.copy()
    upper = instance.upper.copy()
    for ch in changes:
        if not 0 <= ch.var < instance.num_vars:
            raise IndexError(f"bound change var {ch.var} out of range")
        if ch.direction == TIGHTEN_UPPER:
            upper[ch.var] = min(upper[ch.var], ch.value)
        elif ch.direction == TIGHTEN_LOWER:
            lower[ch.var] = max(lower[ch.var], ch.value)
        else:
            raise ValueError(f"unknown bound change direction {ch.direction!r}")
    return replace(instance, lower=lower, upper=upper)


def _encode_bound(value: float) -> float | str:
    if value == math.inf:
        return "+inf"
    if value == -math.inf:
        return "-inf"
    return float(value)


def _decode_bound(value, where: str) -> float:
    if value == "+inf":
        return math.inf
    if value == "-inf":
        return -math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceSchemaError(f"{where}: expected number or +/-inf string, got {value!r}")
    if math.isnan(value) or math.isinf(value):
        raise InstanceSchemaError(f"{where}: non-finite literals are not allowed")
    return float(value)


def _require_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceSchemaError(f"{where}: expected a number, got {value!r}")
    if math.isnan(value) or math.isinf(value):
        raise InstanceSchemaError(f"{where}: non-finite literals are not allowed")
    return float(value)


def serialize_instance(instance: MilpInstance) -> bytes:
    """Deterministic JSON encoding: fixed key order, rows in index order,
    coefficient pairs sorted by column."""
    doc = {
        "name": instance.name,
        "num_vars": instance.num_vars,
        "objective": [float(v) for v in instance.objective],
        "lower": [_encode_bound(v) for v in instance.lower],
        "upper": [_encode_bound(v) for v in instance.upper],
        "integer": [int(j) for j in instance.integer_indices],
        "rows": [
            {
                "coeffs": [[int(c), float(v)] for c, v in zip(row.cols, row.coeffs)],
                "rhs": float(row.rhs),
            }
            for row in instance.rows
        ],
    }
    return json.dumps(doc, indent=None, separators=(",", ":")).encode("utf-8")


def parse_instance(data: bytes) -> MilpInstance:
    """Parse the JSON instance format; raises InstanceFormatError for broken
    documents and InstanceSchemaError for schema violations."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InstanceFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InstanceFormatError("top-level value must be an object")

    required = ["name", "num_vars", "objective", "lower", "upper", "integer", "rows"]
    for key in required:
        if key not in doc:
            raise InstanceSchemaError(f"missing required field {key!r}")

    if not isinstance(doc["name"], str):
        raise InstanceSchemaError("name must be a string")
    if isinstance(doc["num_vars"], bool) or not isinstance(doc["num_vars"], int):
        raise InstanceSchemaError("num_vars must be an integer")
    n = doc["num_vars"]
    if n < 1:
        raise InstanceSchemaError("num_vars must be >= 1")

    for key in ("objective", "lower", "upper", "integer", "rows"):
        if not isinstance(doc[key], list):
            raise InstanceSchemaError(f"{key} must be an array")
    if len(doc["objective"]) != n or len(doc["lower"]) != n or len(doc["upper"]) != n:
        raise InstanceSchemaError("objective/lower/upper must have length num_vars")

    objective = np.array(
        [_require_number(v, f"objective[{k}]") for k, v in enumerate(doc["objective"])]
    )
    lower = np.array([_decode_bound(v, f"lower[{k}]") for k, v in enumerate(doc["lower"])])
    upper = np.array([_decode_bound(v, f"upper[{k}]") for k, v in enumerate(doc["upper"])])

    integer = []
    for k, j in enumerate(doc["integer"]):
        if isinstance(j, bool) or not isinstance(j, int):
            raise InstanceSchemaError(f"integer[{k}] must be an integer index")
        integer.append(j)

    rows = []
    for i, rdoc in enumerate(doc["rows"]):
        if not isinstance(rdoc, dict) or "coeffs" not in rdoc or "rhs" not in rdoc:
            raise InstanceSchemaError(f"rows[{i}] must be an object with coeffs and rhs")
        if not isinstance(rdoc["coeffs"], list):
            raise InstanceSchemaError(f"rows[{i}].coeffs must be an array")
        pairs = []
        for k, pair in enumerate(rdoc["coeffs"]):
            if not isinstance(pair, list) or len(pair) != 2:
                raise InstanceSchemaError(f"rows[{i}].coeffs[{k}] must be a [col, val] pair")
            col, val = pair
            if isinstance(col, bool) or not isinstance(col, int):
                raise InstanceSchemaError(f"rows[{i}].coeffs[{k}] column must be an integer")
            pairs.append((col, _require_number(val, f"rows[{i}].coeffs[{k}] value")))
        rows.append((pairs, _require_number(rdoc["rhs"], f"rows[{i}].rhs")))

    instance = make_instance(doc["name"], objective, lower, upper, integer, rows)
    problems = validate(instance)
    if problems:
        raise InstanceSchemaError("; ".join(problems))
    return instance
