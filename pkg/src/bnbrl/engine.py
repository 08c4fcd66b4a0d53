"""Branch-and-bound search tree, node selection, branching rules, pruning.

A transition expands one open node into two children whose LP relaxations
are solved immediately; each child is classified at creation (infeasible /
dominated by the incumbent / integral / open), so the open set only ever
holds branchable nodes and every completed tree consists of branched
internal nodes and pruned leaves. Node count is therefore always
1 + 2 * step_count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .milp import (
    TIGHTEN_LOWER,
    TIGHTEN_UPPER,
    Assignment,
    BoundChange,
    MilpInstance,
)
from .simplex import (
    EPS_FEAS,
    EPS_INT,
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    STATUS_UNBOUNDED,
    LpResult,
    solve_lp_arrays,
)

NODE_OPEN = "open"
NODE_PRUNED_INFEASIBLE = "pruned_infeasible"
NODE_PRUNED_BY_BOUND = "pruned_by_bound"
NODE_PRUNED_INTEGRAL = "pruned_integral"
NODE_BRANCHED = "branched"

DFS = "dfs"
BFS = "bfs"
BEST_BOUND = "best_bound"

MINUS_FIRST = "minus_first"
PLUS_FIRST = "plus_first"

SOLVE_OPTIMAL = "optimal"
SOLVE_LIMIT = "limit_reached"

EPS_SB = 1e-4
SB_BIG = 1e8
DEFAULT_MAX_NODES = 100_000


@dataclass(frozen=True)
class NodeSelection:
    """Node selection policy: how the next open node is chosen and in which
    order freshly created children are pushed."""

    kind: str = DFS
    dfs_child_order: str = MINUS_FIRST

    @property
    def name(self) -> str:
        if self.kind == DFS and self.dfs_child_order != MINUS_FIRST:
            return f"{self.kind}+{self.dfs_child_order}"
        return self.kind


@dataclass
class BnbNode:
    id: int
    parent: int | None
    bound_changes: tuple[BoundChange, ...]
    lower: np.ndarray
    upper: np.ndarray
    lp: LpResult
    status: str
    depth: int
    created_at: int
    selected_at: int | None = None
    incumbent_at_selection: float | None = None
    subtree_nodes_added: int | None = None
    branch_var: int | None = None
    branch_value: float | None = None
    child_minus: int | None = None
    child_plus: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.status in (
            NODE_PRUNED_INFEASIBLE,
            NODE_PRUNED_BY_BOUND,
            NODE_PRUNED_INTEGRAL,
        )


class PseudocostStats:
    """Running per-variable averages of LP objective gain per unit of
    fractionality, accumulated from realized expansions only."""

    def __init__(self, num_vars: int):
        self.down_sum = np.zeros(num_vars)
        self.down_cnt = np.zeros(num_vars, dtype=np.int64)
        self.up_sum = np.zeros(num_vars)
        self.up_cnt = np.zeros(num_vars, dtype=np.int64)

    def record(self, var: int, frac_value: float, minus_lp: LpResult,
               plus_lp: LpResult, parent_obj: float) -> None:
        f_down = frac_value - math.floor(frac_value)
        f_up = math.ceil(frac_value) - frac_value
        if minus_lp.status == STATUS_OPTIMAL and f_down > EPS_INT:
            self.down_sum[var] += max(minus_lp.objective - parent_obj, 0.0) / f_down
            self.down_cnt[var] += 1
        if plus_lp.status == STATUS_OPTIMAL and f_up > EPS_INT:
            self.up_sum[var] += max(plus_lp.objective - parent_obj, 0.0) / f_up
            self.up_cnt[var] += 1

    def down_estimate(self, var: int) -> float:
        c = self.down_cnt[var]
        return float(self.down_sum[var] / c) if c else 0.0

    def up_estimate(self, var: int) -> float:
        c = self.up_cnt[var]
        return float(self.up_sum[var] / c) if c else 0.0

    def down_estimates(self, idx: np.ndarray) -> np.ndarray:
        cnt = self.down_cnt[idx]
        return np.where(cnt > 0, self.down_sum[idx] / np.maximum(cnt, 1), 0.0)

    def up_estimates(self, idx: np.ndarray) -> np.ndarray:
        cnt = self.up_cnt[idx]
        return np.where(cnt > 0, self.up_sum[idx] / np.maximum(cnt, 1), 0.0)

    def observations(self, var: int) -> int:
        return int(min(self.down_cnt[var], self.up_cnt[var]))


class SearchTree:
    """The full optimization state: node store, open set, incumbent, GUB."""

    def __init__(self, instance: MilpInstance, selection: NodeSelection,
                 use_lp_cache: bool = True):
        self.instance = instance
        self.selection = selection
        self.a_mat = instance.dense_matrix()
        self.b_vec = instance.rhs_vector()
        self.c_vec = instance.objective
        self.nodes: list[BnbNode] = []
        self.open_ids: list[int] = []
        self.incumbent: Assignment | None = None
        self.gub: float = math.inf
        self.step: int = 0
        self.pseudocosts = PseudocostStats(instance.num_vars)
        self._lp_cache: dict[bytes, LpResult] | None = {} if use_lp_cache else None
        self.root_objective: float | None = None
        self._int_idx = np.array(instance.integer_indices, dtype=np.int64)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def solve_bounds(self, lower: np.ndarray, upper: np.ndarray) -> LpResult:
        if self._lp_cache is None:
            return solve_lp_arrays(self.a_mat, self.b_vec, self.c_vec, lower, upper)
        key = lower.tobytes() + upper.tobytes()
        hit = self._lp_cache.get(key)
        if hit is None:
            hit = solve_lp_arrays(self.a_mat, self.b_vec, self.c_vec, lower, upper)
            if len(self._lp_cache) < 400_000:
                self._lp_cache[key] = hit
        return hit

    def _maybe_update_incumbent(self, lp: LpResult) -> None:
        candidate = integral_assignment(self.c_vec, self.instance.integer_indices, lp.point)
        if candidate.objective_value < self.gub:
            self.incumbent = candidate
            self.gub = candidate.objective_value


def integral_assignment(c_vec: np.ndarray, integer_indices, point: np.ndarray) -> Assignment:
    """Snap the integer coordinates of an integral LP point and recompute
    the objective, so stored incumbents satisfy the exact-arithmetic
    invariant."""
    values = point.copy()
    for j in integer_indices:
        values[j] = round(values[j])
    return Assignment(values=values, objective_value=float(np.dot(c_vec, values)))


def _bound_prunes(obj: float, gub: float) -> bool:
    """Strict domination with relative tolerance: equal-objective subtrees
    cannot improve the incumbent, so ties prune too."""
    if gub == math.inf:
        return False
    return obj >= gub - EPS_FEAS * (1.0 + abs(gub))


def init_tree(instance: MilpInstance, selection: NodeSelection | None = None,
              use_lp_cache: bool = True) -> SearchTree:
    """Solve the root relaxation and classify the root; the returned tree is
    terminal (empty open set) when the root fathoms."""
    selection = selection or NodeSelection()
    tree = SearchTree(instance, selection, use_lp_cache=use_lp_cache)
    lp = tree.solve_bounds(instance.lower, instance.upper)
    if lp.status == STATUS_UNBOUNDED:
        raise ValueError("root relaxation is unbounded; not a solvable MILP")
    if lp.status == STATUS_INFEASIBLE:
        status = NODE_PRUNED_INFEASIBLE
    elif _is_integral_point(lp.point, instance, tree._int_idx):
        status = NODE_PRUNED_INTEGRAL
    else:
        status = NODE_OPEN
    root = BnbNode(
        id=0,
        parent=None,
        bound_changes=(),
        lower=instance.lower.copy(),
        upper=instance.upper.copy(),
        lp=lp,
        status=status,
        depth=0,
        created_at=0,
    )
    tree.nodes.append(root)
    tree.root_objective = lp.objective
    if status == NODE_PRUNED_INTEGRAL:
        tree._maybe_update_incumbent(lp)
    elif status == NODE_OPEN:
        tree.open_ids.append(0)
    return tree


def _is_integral_point(x: np.ndarray, instance: MilpInstance,
                       int_idx: np.ndarray | None = None) -> bool:
    idx = int_idx if int_idx is not None else np.array(instance.integer_indices, dtype=np.int64)
    if idx.size == 0:
        return True
    xi = x[idx]
    return bool((np.abs(xi - np.round(xi)) <= EPS_INT).all())


def fractional_candidates(tree: SearchTree, node_id: int) -> list[int]:
    """Integer variables fractional in the node's LP point, ascending."""
    node = tree.nodes[node_id]
    if node.status != NODE_OPEN:
        raise ValueError(f"node {node_id} is not open (status {node.status})")
    idx = tree._int_idx
    xi = node.lp.point[idx]
    out = [int(j) for j in idx[np.abs(xi - np.round(xi)) > EPS_INT]]
    assert out, "open node with no fractional candidates violates tree invariants"
    return out


def select_node(tree: SearchTree, selection: NodeSelection | None = None) -> int:
    """Pop the next focus node per the selection policy, stamping its
    selection step and the incumbent bound it sees."""
    selection = selection or tree.selection
    if not tree.open_ids:
        raise ValueError("open set is empty")
    if selection.kind == DFS:
        nid = tree.open_ids.pop()
    elif selection.kind == BFS:
        nid = tree.open_ids.pop(0)
    elif selection.kind == BEST_BOUND:
        best_pos = 0
        best_obj = tree.nodes[tree.open_ids[0]].lp.objective
        for pos in range(1, len(tree.open_ids)):
            obj = tree.nodes[tree.open_ids[pos]].lp.objective
            cand = tree.open_ids[pos]
            if obj < best_obj or (obj == best_obj and cand < tree.open_ids[best_pos]):
                best_pos = pos
                best_obj = obj
        nid = tree.open_ids.pop(best_pos)
    else:
        raise ValueError(f"unknown selection kind {selection.kind!r}")
    node = tree.nodes[nid]
    node.selected_at = tree.step
    node.incumbent_at_selection = tree.gub
    return nid


def _child_bounds(node: BnbNode, var: int, frac_value: float):
    minus_lower = node.lower
    minus_upper = node.upper.copy()
    minus_upper[var] = math.floor(frac_value)
    plus_lower = node.lower.copy()
    plus_lower[var] = math.ceil(frac_value)
    plus_upper = node.upper
    return (minus_lower, minus_upper), (plus_lower, plus_upper)


def expand(tree: SearchTree, node_id: int, branch_var: int) -> tuple[int, int]:
    """Branch the focus node on branch_var: create, solve, and classify both
    children (minus first), push survivors per the selection policy, and
    advance the step counter. Returns (minus_id, plus_id)."""
    node = tree.nodes[node_id]
    if node.status != NODE_OPEN:
        raise ValueError(f"cannot expand node {node_id} with status {node.status}")
    x_hat = node.lp.point[branch_var]
    if branch_var not in tree.instance.integer_indices or abs(x_hat - round(x_hat)) <= EPS_INT:
        raise ValueError(f"var {branch_var} is not a fractional candidate at node {node_id}")

    tree.step += 1
    (m_lo, m_hi), (p_lo, p_hi) = _child_bounds(node, branch_var, x_hat)
    node.status = NODE_BRANCHED
    node.branch_var = branch_var
    node.branch_value = float(x_hat)

    child_ids = []
    open_children = []
    lps = []
    for lo, hi, change in (
        (m_lo, m_hi, BoundChange(branch_var, TIGHTEN_UPPER, math.floor(x_hat))),
        (p_lo, p_hi, BoundChange(branch_var, TIGHTEN_LOWER, math.ceil(x_hat))),
    ):
        lp = tree.solve_bounds(lo, hi)
        lps.append(lp)
        if lp.status == STATUS_INFEASIBLE:
            status = NODE_PRUNED_INFEASIBLE
        elif _bound_prunes(lp.objective, tree.gub):
            status = NODE_PRUNED_BY_BOUND
        elif _is_integral_point(lp.point, tree.instance, tree._int_idx):
            status = NODE_PRUNED_INTEGRAL
        else:
            status = NODE_OPEN
        child = BnbNode(
            id=len(tree.nodes),
            parent=node_id,
            bound_changes=node.bound_changes + (change,),
            lower=lo,
            upper=hi,
            lp=lp,
            status=status,
            depth=node.depth + 1,
            created_at=tree.step,
        )
        tree.nodes.append(child)
        child_ids.append(child.id)
        if status == NODE_PRUNED_INTEGRAL:
            tree._maybe_update_incumbent(lp)
        elif status == NODE_OPEN:
            open_children.append(child.id)

    node.child_minus, node.child_plus = child_ids
    tree.pseudocosts.record(branch_var, x_hat, lps[0], lps[1],
                            node.lp.objective)
    _push_open(tree, open_children, child_ids)
    return child_ids[0], child_ids[1]


def _push_open(tree: SearchTree, open_children: list[int], child_ids: list[int]) -> None:
    sel = tree.selection
    minus_id, plus_id = child_ids
    if sel.kind == DFS:
        # The child to visit first is pushed last (LIFO).
        order = [plus_id, minus_id] if sel.dfs_child_order == MINUS_FIRST else [minus_id, plus_id]
    elif sel.kind == BFS:
        order = [minus_id, plus_id] if sel.dfs_child_order == MINUS_FIRST else [plus_id, minus_id]
    else:
        order = [minus_id, plus_id]
    for nid in order:
        if nid in open_children:
            tree.open_ids.append(nid)


def strong_branching_scores(tree: SearchTree, node_id: int) -> dict[int, float]:
    """Score every fractional candidate by the product of both children's
    LP bound improvements; probe solves leave the tree untouched."""
    node = tree.nodes[node_id]
    if node.status != NODE_OPEN:
        raise ValueError(f"node {node_id} is not open")
    scores: dict[int, float] = {}
    for var in fractional_candidates(tree, node_id):
        x_hat = node.lp.point[var]
        (m_lo, m_hi), (p_lo, p_hi) = _child_bounds(node, var, x_hat)
        deltas = []
        for lo, hi in ((m_lo, m_hi), (p_lo, p_hi)):
            lp = tree.solve_bounds(lo, hi)
            if lp.status == STATUS_INFEASIBLE:
                deltas.append(SB_BIG)
            else:
                deltas.append(lp.objective - node.lp.objective)
        scores[var] = max(deltas[0], EPS_SB) * max(deltas[1], EPS_SB)
    return scores


@dataclass
class BranchContext:
    rng: np.random.Generator
    stats: PseudocostStats


class BranchingRule:
    """Picks the variable to branch on among the fractional candidates."""

    name = "abstract"

    def select(self, tree: SearchTree, node_id: int, candidates: list[int],
               ctx: BranchContext) -> int:
        raise NotImplementedError


class RandomBranching(BranchingRule):
    name = "random"

    def select(self, tree, node_id, candidates, ctx):
        return candidates[int(ctx.rng.integers(0, len(candidates)))]


class MostFractionalBranching(BranchingRule):
    name = "most_fractional"

    def select(self, tree, node_id, candidates, ctx):
        x = tree.nodes[node_id].lp.point
        best = candidates[0]
        best_frac = -1.0
        for var in candidates:
            frac = abs(x[var] - round(x[var]))
            if frac > best_frac:
                best, best_frac = var, frac
        return best


class StrongBranching(BranchingRule):
    name = "strong_branching"

    def select(self, tree, node_id, candidates, ctx):
        scores = strong_branching_scores(tree, node_id)
        best = candidates[0]
        best_score = -math.inf
        for var in candidates:
            if scores[var] > best_score:
                best, best_score = var, scores[var]
        return best


class PseudocostBranching(BranchingRule):
    """Strong-branching-style product scores from pseudocost estimates,
    falling back to actual strong branching on variables with fewer than
    `reliability` realized observations."""

    name = "pseudocost"

    def __init__(self, reliability: int = 4):
        self.reliability = reliability

    def select(self, tree, node_id, candidates, ctx):
        node = tree.nodes[node_id]
        x = node.lp.point
        unreliable = [v for v in candidates if ctx.stats.observations(v) < self.reliability]
        sb_scores: dict[int, float] = {}
        if unreliable:
            for var in unreliable:
                x_hat = x[var]
                (m_lo, m_hi), (p_lo, p_hi) = _child_bounds(node, var, x_hat)
                deltas = []
                for lo, hi in ((m_lo, m_hi), (p_lo, p_hi)):
                    lp = tree.solve_bounds(lo, hi)
                    deltas.append(SB_BIG if lp.status == STATUS_INFEASIBLE
                                  else lp.objective - node.lp.objective)
                sb_scores[var] = max(deltas[0], EPS_SB) * max(deltas[1], EPS_SB)
        best = candidates[0]
        best_score = -math.inf
        for var in candidates:
            if var in sb_scores:
                score = sb_scores[var]
            else:
                f_down = x[var] - math.floor(x[var])
                f_up = math.ceil(x[var]) - x[var]
                score = max(ctx.stats.down_estimate(var) * f_down, EPS_SB) * max(
                    ctx.stats.up_estimate(var) * f_up, EPS_SB)
            if score > best_score:
                best, best_score = var, score
        return best


@dataclass
class SolveReport:
    objective: float | None
    incumbent: Assignment | None
    node_count: int
    step_count: int
    status: str
    tree: SearchTree
    seconds: float
    branching: str
    selection: str
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "objective": self.objective,
            "node_count": self.node_count,
            "step_count": self.step_count,
            "status": self.status,
            "seconds": self.seconds,
            "branching": self.branching,
            "selection": self.selection,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=None, separators=(",", ":"))


def fill_subtree_counts(tree: SearchTree) -> None:
    """Bottom-up pass: nodes added strictly below each node (leaves 0,
    branched nodes 2 + both children's counts)."""
    for node in reversed(tree.nodes):
        if node.status == NODE_BRANCHED:
            minus = tree.nodes[node.child_minus].subtree_nodes_added or 0
            plus = tree.nodes[node.child_plus].subtree_nodes_added or 0
            node.subtree_nodes_added = 2 + minus + plus
        else:
            node.subtree_nodes_added = 0


def solve(instance: MilpInstance, branching: BranchingRule,
          selection: NodeSelection | None = None,
          max_nodes: int = DEFAULT_MAX_NODES,
          max_steps: int | None = None,
          seed: int = 0,
          use_lp_cache: bool = True) -> SolveReport:
    """Run branch and bound to completion (or a limit) under the given
    branching rule and node selection policy."""
    import time

    t0 = time.perf_counter()
    selection = selection or NodeSelection()
    tree = init_tree(instance, selection, use_lp_cache=use_lp_cache)
    ctx = BranchContext(rng=np.random.default_rng(seed), stats=tree.pseudocosts)
    status = SOLVE_OPTIMAL
    while tree.open_ids:
        if max_steps is not None and tree.step >= max_steps:
            status = SOLVE_LIMIT
            break
        if tree.node_count + 2 > max_nodes:
            status = SOLVE_LIMIT
            break
        nid = select_node(tree, selection)
        candidates = fractional_candidates(tree, nid)
        var = branching.select(tree, nid, candidates, ctx)
        expand(tree, nid, var)
    fill_subtree_counts(tree)
    seconds = time.perf_counter() - t0
    return SolveReport(
        objective=tree.incumbent.objective_value if tree.incumbent else None,
        incumbent=tree.incumbent,
        node_count=tree.node_count,
        step_count=tree.step,
        status=status,
        tree=tree,
        seconds=seconds,
        branching=branching.name,
        selection=selection.name,
        seed=seed,
    )
