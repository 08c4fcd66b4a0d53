"""Bellman target construction over recorded episodes.

Targets live on the nodes-added scale: every expansion contributes a
constant 2 * reward_per_transition, so with the practical reward of -1 the
one-step backup for a node whose children both fathom is exactly -2 (two
nodes added). Three target families:

- one-step: constant plus the best bootstrap value of each surviving child;
- k-step: follow the *realized* depth-first trajectory k expansions into
  the focus node's subtree and bootstrap the (up to k+1) open frontier
  nodes; if the subtree fathoms in j < k expansions the target is the
  realized return with no bootstrap (the same formula, with an all-fathomed
  frontier);
- node-pair k-step: unroll the child-pair backup to the full depth-k
  descendant frontier (2^k slots), the scheme implied by treating each
  expansion as a node-to-two-children transition. Coincides with the
  k-step target at k=1 and diverges from it on deeper subtrees, since
  depth-first search never produces such balanced frontiers.

When a separate target network is supplied, bootstrap values use the
online network's argmax and the target network's value (double-Q);
otherwise a plain max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import SubtreeRecord
from .qfunc import LOSS_HL_GAUSS_CE, QFunction


@dataclass(frozen=True)
class TargetConfig:
    k: int = 3
    reward_per_transition: float = -1.0
    loss: str = LOSS_HL_GAUSS_CE

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def expansion_constant(self) -> float:
        return 2.0 * self.reward_per_transition


def frontier_value(features: np.ndarray, qfn: QFunction,
                   target_qfn: QFunction | None = None) -> float:
    """Best bootstrap value over a frontier node's candidate rows."""
    online = qfn.values(features)
    if target_qfn is None:
        return float(np.max(online))
    row = int(np.argmax(online))
    return float(target_qfn.values(features[row:row + 1])[0])


def _record_value(record: SubtreeRecord | None, fathomed: bool, qfn: QFunction,
                  target_qfn: QFunction | None) -> float:
    if fathomed:
        return 0.0
    return frontier_value(record.features, qfn, target_qfn)


def target_1step(record: SubtreeRecord, qfn: QFunction, config: TargetConfig,
                 target_qfn: QFunction | None = None) -> float:
    """One expansion's constant plus both children's bootstrap values."""
    total = config.expansion_constant
    total += _record_value(record.child_minus, record.minus_fathomed, qfn, target_qfn)
    total += _record_value(record.child_plus, record.plus_fathomed, qfn, target_qfn)
    return total


def subtree_expansions(record: SubtreeRecord, limit: int) -> list[SubtreeRecord]:
    """First `limit` expansions inside the record's subtree in selection
    order (depth-first selection stamps inside a subtree are contiguous)."""
    window_end = record.selected_at + limit
    out = []
    stack = [record]
    while stack:
        r = stack.pop()
        if r.selected_at >= window_end:
            continue
        out.append(r)
        if r.child_minus is not None:
            stack.append(r.child_minus)
        if r.child_plus is not None:
            stack.append(r.child_plus)
    out.sort(key=lambda r: r.selected_at)
    return out


def kstep_frontier(record: SubtreeRecord, k: int) -> tuple[int, list[SubtreeRecord | None]]:
    """Realized expansions count j = min(k, subtree expansions) and the
    frontier after them: j+1 slots, None marking fathomed leaves."""
    expansions = subtree_expansions(record, k)
    taken = {r.node_id for r in expansions}
    frontier: list[SubtreeRecord | None] = []
    for r in expansions:
        for child, fathomed in ((r.child_minus, r.minus_fathomed),
                                (r.child_plus, r.plus_fathomed)):
            if fathomed:
                frontier.append(None)
            elif child.node_id not in taken:
                frontier.append(child)
    return len(expansions), frontier


def target_kstep(record: SubtreeRecord, qfn: QFunction, config: TargetConfig,
                 target_qfn: QFunction | None = None) -> float:
    """Bootstrap the frontier reached after k realized depth-first
    expansions inside the subtree (pure realized return when it fathoms
    earlier)."""
    j, frontier = kstep_frontier(record, config.k)
    total = config.expansion_constant * j
    for child in frontier:
        total += 0.0 if child is None else frontier_value(child.features, qfn, target_qfn)
    return total


def treemdp_frontier(record: SubtreeRecord, k: int) -> tuple[int, list[SubtreeRecord | None]]:
    """Virtual expansion count and depth-k descendant frontier of the
    child-pair backup: every non-fathomed node strictly above depth k is
    expanded, fathomed leaves stay as None slots."""
    if k < 1:
        raise ValueError("k must be >= 1")
    count = 1
    slots: list[SubtreeRecord | None] = []

    def walk(child: SubtreeRecord | None, fathomed: bool, depth: int) -> None:
        nonlocal count
        if fathomed:
            slots.append(None)
            return
        if depth == 0:
            slots.append(child)
            return
        count += 1
        walk(child.child_minus, child.minus_fathomed, depth - 1)
        walk(child.child_plus, child.plus_fathomed, depth - 1)

    walk(record.child_minus, record.minus_fathomed, k - 1)
    walk(record.child_plus, record.plus_fathomed, k - 1)
    return count, slots


def target_treemdp_kstep(record: SubtreeRecord, qfn: QFunction, config: TargetConfig,
                         k: int | None = None,
                         target_qfn: QFunction | None = None) -> float:
    """Unrolled child-pair backup over the full depth-k descendant frontier,
    truncated at fathomed leaves (they contribute nothing, including no
    expansion constants below them)."""
    count, slots = treemdp_frontier(record, config.k if k is None else k)
    total = config.expansion_constant * count
    for child in slots:
        total += 0.0 if child is None else frontier_value(child.features, qfn, target_qfn)
    return total


STYLE_BBMDP = "bbmdp"
STYLE_TREEMDP = "treemdp"


@dataclass
class ReplayTransition:
    """One training sample assembled post-hoc from a completed episode."""

    features: np.ndarray          # focus node's candidate rows
    action_row: int
    constant: float               # realized Bellman constant (2r per expansion)
    successors: list[np.ndarray]  # frontier feature matrices; empty = fathomed


def build_transition(record: SubtreeRecord, config: TargetConfig,
                     style: str = STYLE_BBMDP) -> ReplayTransition:
    empty = np.zeros((0, record.features.shape[1]))
    if style == STYLE_BBMDP:
        j, frontier = kstep_frontier(record, config.k)
        constant = config.expansion_constant * j
    elif style == STYLE_TREEMDP:
        count, frontier = treemdp_frontier(record, config.k)
        constant = config.expansion_constant * count
    else:
        raise ValueError(f"unknown target style {style!r}")
    succ = [empty if child is None else child.features for child in frontier]
    return ReplayTransition(
        features=record.features,
        action_row=record.action_row,
        constant=constant,
        successors=succ,
    )


def transition_target(t: ReplayTransition, qfn: QFunction,
                      target_qfn: QFunction | None = None) -> float:
    total = t.constant
    for succ in t.successors:
        if succ.shape[0]:
            total += frontier_value(succ, qfn, target_qfn)
    return total


def batch_transition_targets(batch: list[ReplayTransition], qfn: QFunction,
                             target_qfn: QFunction | None = None) -> np.ndarray:
    """Targets for a whole batch with the successor forwards fused into one
    network call (same accumulation order per transition as
    transition_target)."""
    mats = []
    owners = []
    for bi, t in enumerate(batch):
        for succ in t.successors:
            if succ.shape[0]:
                mats.append(succ)
                owners.append(bi)
    targets = np.array([t.constant for t in batch])
    if not mats:
        return targets
    big = np.concatenate(mats, axis=0)
    online = qfn.values(big)
    offsets = np.cumsum([0] + [m.shape[0] for m in mats])
    if target_qfn is None:
        values = [float(np.max(online[offsets[i]:offsets[i + 1]]))
                  for i in range(len(mats))]
    else:
        rows = [offsets[i] + int(np.argmax(online[offsets[i]:offsets[i + 1]]))
                for i in range(len(mats))]
        values = [float(v) for v in target_qfn.values(big[rows])]
    for owner, value in zip(owners, values):
        targets[owner] += value
    return targets
