"""Policy evaluation and the aggregate metrics used for reporting.

Every (policy, instance, seed) cell is one full solve under limits; rows
aggregate into geometric means, solved counts, per-instance wins and mean
ranks, and scores normalized against a reference policy (per family, then
averaged across families). Wall-clock seconds are recorded and drive the
win/rank metrics, but never gate acceptance: they are the only
hardware-dependent columns in the outputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import engine as eng
from .engine import BranchingRule, NodeSelection
from .milp import MilpInstance

# Fields derived from wall-clock time, excluded from byte-determinism checks.
TIME_DERIVED_ROW_FIELDS = ("seconds",)
TIME_DERIVED_AGG_FIELDS = ("seconds_geomean", "wins", "mean_rank")


@dataclass(frozen=True)
class PolicySpec:
    name: str
    rule: BranchingRule
    selection: NodeSelection = field(default_factory=NodeSelection)


@dataclass
class EvalRow:
    instance: str
    family: str
    policy: str
    seed: int
    nodes: int
    steps: int
    seconds: float
    solved: bool
    objective: float | None
    gap: float  # unsolved-ranking proxy: gub minus best open LP bound


@dataclass
class EvalReport:
    rows: list[EvalRow]
    policies: list[str]

    def rows_for(self, policy: str) -> list[EvalRow]:
        return [r for r in self.rows if r.policy == policy]


def _family_of(instance_name: str) -> str:
    return instance_name.split("-")[0]


def geometric_mean(values) -> float:
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("geometric mean of an empty set")
    return float(np.exp(np.mean(np.log(arr))))


def _final_gap(tree: eng.SearchTree) -> float:
    if not tree.open_ids:
        return 0.0
    best_bound = min(tree.nodes[i].lp.objective for i in tree.open_ids)
    if tree.gub == math.inf:
        return math.inf
    return tree.gub - best_bound


def evaluate(policies: list[PolicySpec], instances: list[tuple[str, MilpInstance]],
             seeds: list[int], max_nodes: int = eng.DEFAULT_MAX_NODES) -> EvalReport:
    """Solve every (policy, instance, seed) cell; deterministic apart from
    the seconds column."""
    rows = []
    for name, instance in instances:
        for spec in policies:
            for seed in seeds:
                report = eng.solve(instance, spec.rule, spec.selection,
                                   max_nodes=max_nodes, seed=seed)
                rows.append(EvalRow(
                    instance=name,
                    family=_family_of(name),
                    policy=spec.name,
                    seed=seed,
                    nodes=report.node_count,
                    steps=report.step_count,
                    seconds=report.seconds,
                    solved=report.status == eng.SOLVE_OPTIMAL,
                    objective=report.objective,
                    gap=_final_gap(report.tree),
                ))
    return EvalReport(rows=rows, policies=[p.name for p in policies])


def wins_and_ranks(report: EvalReport) -> dict[str, dict]:
    """Per-instance ranking: solved cells by seconds, unsolved after them by
    the gap proxy; ties by node count then policy name. Wins count rank-1
    finishes."""
    if len(report.policies) < 2:
        raise ValueError("ranking needs at least two policies")
    wins = {p: 0 for p in report.policies}
    rank_sum = {p: 0.0 for p in report.policies}
    cells: dict[tuple[str, int], list[EvalRow]] = {}
    for row in report.rows:
        cells.setdefault((row.instance, row.seed), []).append(row)
    n_cells = 0
    for key in sorted(cells):
        group = cells[key]
        if len(group) != len(report.policies):
            raise ValueError(f"cell {key} is missing policies")
        n_cells += 1
        group.sort(key=lambda r: (
            0 if r.solved else 1,
            r.seconds if r.solved else r.gap,
            r.nodes,
            r.policy,
        ))
        for pos, row in enumerate(group, start=1):
            rank_sum[row.policy] += pos
            if pos == 1:
                wins[row.policy] += 1
    return {
        p: {"wins": wins[p], "mean_rank": rank_sum[p] / n_cells}
        for p in report.policies
    }


def normalized_score(report: EvalReport, reference_policy: str) -> dict[str, float]:
    """Per family, 100 * (policy geomean nodes / reference geomean nodes);
    the cross-family score is the arithmetic mean of per-family values."""
    if reference_policy not in report.policies:
        raise ValueError(f"reference policy {reference_policy!r} not in report")
    families = sorted({r.family for r in report.rows})
    per_family: dict[str, dict[str, float]] = {}
    for fam in families:
        ref_gm = geometric_mean(
            r.nodes for r in report.rows if r.family == fam and r.policy == reference_policy)
        for p in report.policies:
            gm = geometric_mean(
                r.nodes for r in report.rows if r.family == fam and r.policy == p)
            per_family.setdefault(p, {})[fam] = 100.0 * gm / ref_gm
    return {p: float(np.mean(list(per_family[p].values()))) for p in report.policies}


def aggregate(report: EvalReport, reference_policy: str | None = None) -> dict:
    """All aggregate metrics as a JSON-ready dict."""
    out: dict = {"policies": {}}
    ranks = wins_and_ranks(report) if len(report.policies) > 1 else None
    scores = normalized_score(report, reference_policy) if reference_policy else None
    for p in report.policies:
        rows = report.rows_for(p)
        entry = {
            "nodes_geomean": geometric_mean(r.nodes for r in rows),
            "seconds_geomean": geometric_mean(max(r.seconds, 1e-9) for r in rows),
            "solved": sum(r.solved for r in rows),
            "cells": len(rows),
        }
        by_family = sorted({r.family for r in rows})
        entry["nodes_geomean_by_family"] = {
            fam: geometric_mean(r.nodes for r in rows if r.family == fam)
            for fam in by_family
        }
        if ranks:
            entry.update(ranks[p])
        if scores:
            entry["normalized_score"] = scores[p]
        out["policies"][p] = entry
    if reference_policy:
        out["reference_policy"] = reference_policy
    return out


CSV_HEADER = "instance,family,policy,seed,nodes,steps,seconds,solved,objective,gap"


def rows_to_csv(report: EvalReport) -> str:
    """Deterministic CSV: rows sorted by (instance, policy, seed)."""
    lines = [CSV_HEADER]
    for r in sorted(report.rows, key=lambda r: (r.instance, r.policy, r.seed)):
        obj = "" if r.objective is None else repr(r.objective)
        gap = "inf" if r.gap == math.inf else repr(r.gap)
        lines.append(
            f"{r.instance},{r.family},{r.policy},{r.seed},{r.nodes},{r.steps},"
            f"{r.seconds!r},{int(r.solved)},{obj},{gap}")
    return "\n".join(lines) + "\n"


def csv_without_time_fields(csv_text: str) -> str:
    """Strip the wall-clock column for byte-determinism comparisons."""
    lines = csv_text.strip().split("\n")
    header = lines[0].split(",")
    keep = [i for i, name in enumerate(header) if name not in TIME_DERIVED_ROW_FIELDS]
    out = []
    for line in lines:
        parts = line.split(",")
        out.append(",".join(parts[i] for i in keep))
    return "\n".join(out) + "\n"


def aggregate_without_time_fields(doc: dict) -> dict:
    out = json.loads(json.dumps(doc))
    for entry in out.get("policies", {}).values():
        for key in TIME_DERIVED_AGG_FIELDS:
            entry.pop(key, None)
    return out
