"""Exact dynamic programming on fully enumerable instances.

For instances whose complete search space is tiny, every reachable
(variable-bounds, incumbent-bound) state can be enumerated together with
its expansion outcomes, mirroring the engine's semantics bit for bit (same
LP solves, same pruning rule, same incumbent rounding). On that table:

- value iteration with the one-step backup converges to the optimal
  subtree values (finitely, since states are acyclic);
- an exhaustive recursion over all branching decision sequences yields the
  minimal and maximal achievable subtree sizes;
- a greedy tabular policy drives the real engine, letting tests assert that
  greedy play realizes the minimal subtree at every node.

The incumbent evolution between a node's two child subtrees is policy
independent (a completed subtree always contributes the subproblem's exact
optimum when it improves the bound), which is what makes subtree values
well-defined functions of (bounds, incumbent) under depth-first search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine as eng
from .engine import BranchingRule, integral_assignment, _bound_prunes
from .milp import MilpInstance
from .oracle import brute_force_optimum
from .simplex import EPS_INT, STATUS_INFEASIBLE, STATUS_OPTIMAL, solve_lp_arrays

PRUNED = "pruned"


def _bounds_key(lower: np.ndarray, upper: np.ndarray) -> bytes:
    return lower.tobytes() + upper.tobytes()


@dataclass
class ChildOutcome:
    pruned: bool
    bounds: tuple[np.ndarray, np.ndarray] | None  # open children only


@dataclass
class ActionOutcome:
    """Result of expanding a state on one action: both children's fates and
    the incumbent bounds each open child is later selected under."""

    minus: ChildOutcome
    plus: ChildOutcome
    minus_state: tuple[bytes, float] | None
    plus_state: tuple[bytes, float] | None


@dataclass
class StateInfo:
    key: tuple[bytes, float]
    lower: np.ndarray
    upper: np.ndarray
    gub: float
    candidates: list[int]
    actions: dict[int, ActionOutcome]


class DpTable:
    """Reachable-state enumeration for one instance under depth-first,
    minus-first exploration."""

    def __init__(self, instance: MilpInstance, max_states: int = 200_000):
        self.instance = instance
        self.a_mat = instance.dense_matrix()
        self.b_vec = instance.rhs_vector()
        self.c_vec = instance.objective
        self.max_states = max_states
        self._lp_cache: dict[bytes, object] = {}
        self._opt_cache: dict[bytes, float | None] = {}
        self.states: dict[tuple[bytes, float], StateInfo] = {}
        self.root_state: tuple[bytes, float] | None = None
        self._build()

    def _lp(self, lower, upper):
        key = _bounds_key(lower, upper)
        hit = self._lp_cache.get(key)
        if hit is None:
            hit = solve_lp_arrays(self.a_mat, self.b_vec, self.c_vec, lower, upper)
            self._lp_cache[key] = hit
        return hit

    def _milp_opt(self, lower, upper) -> float | None:
        """Exact optimum of the sub-MILP (None when infeasible), computed by
        enumeration; incumbent values after finishing a subtree follow from
        this regardless of the branching decisions inside it."""
        key = _bounds_key(lower, upper)
        if key not in self._opt_cache:
            from dataclasses import replace

            sub = replace(self.instance, lower=lower.copy(), upper=upper.copy())
            res = brute_force_optimum(sub)
            self._opt_cache[key] = res.objective if res.feasible else None
        return self._opt_cache[key]

    def _candidates(self, lp) -> list[int]:
        x = lp.point
        return [j for j in self.instance.integer_indices
                if abs(x[j] - round(x[j])) > EPS_INT]

    def _classify(self, lower, upper, gub):
        """Mirror of the engine's child classification; returns
        (outcome, gub_after) where gub_after reflects an integral child."""
        lp = self._lp(lower, upper)
        if lp.status == STATUS_INFEASIBLE:
            return ChildOutcome(True, None), gub
        if _bound_prunes(lp.objective, gub):
            return ChildOutcome(True, None), gub
        x = lp.point
        integral = all(abs(x[j] - round(x[j])) <= EPS_INT
                       for j in self.instance.integer_indices)
        if integral:
            assignment = integral_assignment(self.c_vec, self.instance.integer_indices, x)
            return ChildOutcome(True, None), min(gub, assignment.objective_value)
        return ChildOutcome(False, (lower, upper)), gub

    def _build(self):
        root_lp = self._lp(self.instance.lower, self.instance.upper)
        if root_lp.status != STATUS_OPTIMAL:
            return
        if not self._candidates(root_lp):
            return
        root_key = (_bounds_key(self.instance.lower, self.instance.upper), math.inf)
        self.root_state = root_key
        stack = [(self.instance.lower.copy(), self.instance.upper.copy(), math.inf)]
        while stack:
            lower, upper, gub = stack.pop()
            key = (_bounds_key(lower, upper), gub)
            if key in self.states:
                continue
            if len(self.states) >= self.max_states:
                raise RuntimeError("state enumeration exceeded max_states")
            lp = self._lp(lower, upper)
            cands = self._candidates(lp)
            info = StateInfo(key, lower, upper, gub, cands, {})
            self.states[key] = info
            for var in cands:
                x_hat = lp.point[var]
                m_up = upper.copy()
                m_up[var] = math.floor(x_hat)
                p_lo = lower.copy()
                p_lo[var] = math.ceil(x_hat)
                minus, gub1 = self._classify(lower, m_up, gub)
                plus, gub1 = self._classify(p_lo, upper, gub1)
                minus_state = plus_state = None
                gub_mid = gub1
                if not minus.pruned:
                    minus_state = (_bounds_key(lower, m_up), gub1)
                    stack.append((lower.copy(), m_up, gub1))
                    opt = self._milp_opt(lower, m_up)
                    if opt is not None and opt < gub_mid:
                        gub_mid = opt
                if not plus.pruned:
                    plus_state = (_bounds_key(p_lo, upper), gub_mid)
                    stack.append((p_lo, upper.copy(), gub_mid))
                info.actions[var] = ActionOutcome(minus, plus, minus_state, plus_state)


def value_iteration(table: DpTable, reward_per_transition: float = -1.0,
                    max_sweeps: int = 10_000) -> tuple[dict, int, float]:
    """Tabular one-step backups to a fixed point; returns (q_table,
    sweeps, final_residual). States are acyclic so the residual reaches
    zero after at most max-depth sweeps."""
    constant = 2.0 * reward_per_transition
    q: dict[tuple, dict[int, float]] = {
        key: {a: 0.0 for a in info.actions} for key, info in table.states.items()
    }

    def state_value(state_key, q_cur) -> float:
        if state_key is None:
            return 0.0
        acts = q_cur[state_key]
        return max(acts.values())

    residual = math.inf
    sweeps = 0
    while residual > 1e-9 and sweeps < max_sweeps:
        residual = 0.0
        new_q = {}
        for key, info in table.states.items():
            row = {}
            for var, outcome in info.actions.items():
                val = constant
                val += state_value(outcome.minus_state, q)
                val += state_value(outcome.plus_state, q)
                row[var] = val
                residual = max(residual, abs(val - q[key][var]))
            new_q[key] = row
        q = new_q
        sweeps += 1
    return q, sweeps, residual


def _extreme_added(table: DpTable, pick) -> dict[tuple, int]:
    """Nodes added below each state when every decision is chosen by `pick`
    (min for the optimal tree, max for the worst tree), by exhaustive
    recursion over the action outcomes."""
    memo: dict[tuple, int] = {}

    def added(state_key) -> int:
        if state_key is None:
            return 0
        if state_key in memo:
            return memo[state_key]
        info = table.states[state_key]
        best = None
        for outcome in info.actions.values():
            total = 2 + added(outcome.minus_state) + added(outcome.plus_state)
            best = total if best is None else pick(best, total)
        memo[state_key] = best
        return best

    if table.root_state is not None:
        added(table.root_state)
        for key in list(table.states):
            added(key)
    return memo


def min_added(table: DpTable) -> dict[tuple, int]:
    return _extreme_added(table, min)


def max_added(table: DpTable) -> dict[tuple, int]:
    return _extreme_added(table, max)


def max_tree_nodes(instance: MilpInstance, cap_states: int = 50_000) -> int | None:
    """Worst-case complete tree size over every branching policy, or None
    when the root already fathoms (single-node tree)."""
    table = DpTable(instance, max_states=cap_states)
    if table.root_state is None:
        return 1
    worst = max_added(table)
    return 1 + worst[table.root_state]


def enumerable_instance(seed: int) -> MilpInstance:
    """Random 5-6 binary-variable packing instance; small enough that the
    full decision space enumerates."""
    from .milp import make_instance
    from .rng import SplitMix64

    rng = SplitMix64(seed * 977 + 13)
    n = 5 + seed % 2
    rows = []
    for _ in range(3):
        coeffs = [(j, float(rng.randint(1, 6))) for j in range(n) if rng.uniform() < 0.7]
        if len(coeffs) < 2:
            coeffs = [(0, 2.0), (1, 3.0)]
        cap = max(1, int(sum(v for _, v in coeffs) * 0.5))
        rows.append((coeffs, float(cap)))
    c = [-float(rng.randint(1, 9)) for _ in range(n)]
    return make_instance(f"enum-{seed}", c, [0.0] * n, [1.0] * n, range(n), rows)


def find_enumerable_instances(count: int, start_seed: int = 0,
                              node_cap: int = 63) -> list[MilpInstance]:
    """First `count` seeded instances whose worst-case complete tree stays
    within node_cap and which require at least one branching."""
    out = []
    seed = start_seed
    while len(out) < count:
        inst = enumerable_instance(seed)
        seed += 1
        mx = max_tree_nodes(inst)
        if mx is not None and 3 <= mx <= node_cap:
            out.append(inst)
    return out


class TabularGreedyPolicy(BranchingRule):
    """Branches on the argmax of a tabular q-function keyed by the node's
    bounds and the incumbent bound it was selected under."""

    name = "tabular_greedy"

    def __init__(self, q_table: dict):
        self.q_table = q_table

    def select(self, tree, node_id, candidates, ctx):
        node = tree.nodes[node_id]
        gub = node.incumbent_at_selection if node.selected_at is not None else tree.gub
        key = (_bounds_key(node.lower, node.upper), gub)
        row = self.q_table[key]
        best_var = candidates[0]
        best_val = -math.inf
        for var in candidates:
            if row[var] > best_val:
                best_var, best_val = var, row[var]
        return best_var


class PerfectTabularQ:
    """Q-function facade returning exact optimal values for feature rows
    captured during an episode; rows are matched byte-for-byte against a
    prebuilt map, so it plugs into the target constructors unchanged."""

    def __init__(self, row_map: dict[bytes, float]):
        self.row_map = row_map

    def values(self, matrix: np.ndarray) -> np.ndarray:
        return np.array([self.row_map[row.tobytes()] for row in np.atleast_2d(matrix)])


def perfect_q_from_episode(episode, q_table: dict) -> PerfectTabularQ:
    """Map every captured feature row of a completed episode to its exact
    Q-value; raises if two distinct (state, action) pairs collide on
    identical feature bytes."""
    tree = episode.final_tree
    row_map: dict[bytes, float] = {}
    owners: dict[bytes, tuple] = {}
    for node_id, capture in episode.captures.items():
        node = tree.nodes[node_id]
        key = (_bounds_key(node.lower, node.upper), node.incumbent_at_selection)
        row_q = q_table[key]
        for row, var in zip(capture.matrix, capture.candidates):
            row_bytes = row.tobytes()
            owner = (key, var)
            if row_bytes in owners and owners[row_bytes] != owner:
                if row_map[row_bytes] != row_q[var]:
                    raise RuntimeError("feature-row collision with conflicting values")
                continue
            owners[row_bytes] = owner
            row_map[row_bytes] = row_q[var]
    return PerfectTabularQ(row_map)
