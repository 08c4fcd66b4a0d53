"""Per-candidate feature rows for branching decisions.

Each row is a function of the focus node, the incumbent bound it was
selected under, and the supplied pseudocost statistics; nothing about
sibling subtrees or the rest of the open set leaks in, so two trees that
agree on the focus node and incumbent produce bit-identical rows given the
same statistics. Pseudocost gains are squashed to [0, 1) via x/(1+x) to
keep scales comparable across instance families.
"""

from __future__ import annotations

import math

import numpy as np

from .engine import PseudocostStats, SearchTree

NUM_FEATURES = 12


def _column_density(tree: SearchTree) -> np.ndarray:
    cached = getattr(tree, "_col_density", None)
    if cached is not None:
        return cached
    n = tree.instance.num_vars
    m = tree.instance.num_cons
    counts = np.zeros(n)
    for row in tree.instance.rows:
        for c in row.cols:
            counts[c] += 1.0
    density = counts / m if m else counts
    tree._col_density = density
    return density


def featurize(tree: SearchTree, node_id: int, candidates: list[int],
              stats: PseudocostStats) -> np.ndarray:
    """One row per candidate variable; all entries finite."""
    if not candidates:
        raise ValueError("cannot featurize an empty candidate set")
    node = tree.nodes[node_id]
    inst = tree.instance
    n = inst.num_vars
    x = node.lp.point
    obj = node.lp.objective
    root_obj = tree.root_objective if tree.root_objective is not None else 0.0
    gub = node.incumbent_at_selection if node.selected_at is not None else tree.gub

    c_inf = float(np.max(np.abs(inst.objective)))
    density = _column_density(tree)
    rel_obj = (obj - root_obj) / (1.0 + abs(root_obj))
    if gub == math.inf:
        gap = 1.0
        has_incumbent = 0.0
    else:
        gap = (gub - obj) / (1.0 + abs(gub))
        has_incumbent = 1.0

    cand = np.asarray(candidates, dtype=np.int64)
    xc = x[cand]
    spans = node.upper[cand] - node.lower[cand]
    pc_up = stats.up_estimates(cand)
    pc_down = stats.down_estimates(cand)

    rows = np.empty((len(candidates), NUM_FEATURES))
    rows[:, 0] = np.abs(xc - np.round(xc))
    rows[:, 1] = xc - np.floor(xc)
    rows[:, 2] = inst.objective[cand] / c_inf if c_inf else 0.0
    rows[:, 3] = density[cand]
    rows[:, 4] = node.depth / n
    rows[:, 5] = rel_obj
    rows[:, 6] = gap
    rows[:, 7] = has_incumbent
    rows[:, 8] = np.where(np.isfinite(spans), spans / (1.0 + spans), 1.0)
    rows[:, 9] = pc_up / (1.0 + pc_up)
    rows[:, 10] = pc_down / (1.0 + pc_down)
    rows[:, 11] = len(candidates) / n
    return rows
