"""Environment tests: reset/step semantics, episode identities, records."""

import json
import math

import numpy as np
import pytest

from bnbrl import engine as eng
from bnbrl.env import (
    BranchingEnv,
    EnvConfig,
    bfs_context_counterexample,
    open_set_at_step,
    read_trace,
    rollout,
    subtree_records,
    treemdp_view,
    write_trace,
)
from bnbrl.generators import generate, preset_with_seed
from bnbrl.milp import make_instance
from bnbrl.oracle import brute_force_optimum


def test_reset_terminal_when_root_integral():
    inst = make_instance("int", [-1.0, -1.0], [0, 0], [1, 1], [0, 1], [])
    env = BranchingEnv(inst)
    _, done = env.reset()
    assert done


def test_reset_terminal_when_infeasible():
    inst = make_instance("inf", [1.0], [0.0], [1.0], [0], [([(0, 1.0)], -1.0)])
    env = BranchingEnv(inst)
    _, done = env.reset()
    assert done
    ep = env.finish(False)
    assert ep.total_return == 0.0 and ep.transitions == []


def test_reset_open_when_fractional():
    inst = generate(preset_with_seed("tiny-mult_knapsack", 1))
    env = BranchingEnv(inst)
    _, done = env.reset()
    assert not done
    assert env.focus is not None


def test_step_rejects_masked_action():
    inst = generate(preset_with_seed("tiny-mult_knapsack", 1))
    env = BranchingEnv(inst)
    env.reset()
    cands = env.candidates()
    bad = next(j for j in range(inst.num_vars) if j not in cands)
    nodes_before = env.tree.node_count
    with pytest.raises(ValueError):
        env.step(bad)
    assert env.tree.node_count == nodes_before  # state unchanged


def test_reward_constant_and_return_identity():
    inst = generate(preset_with_seed("tiny-mult_knapsack", 1))
    for reward in (-2.0, -1.0):
        ep = rollout(inst, eng.RandomBranching(),
                     EnvConfig(reward_per_transition=reward), seed=1)
        assert ep.total_return == reward * ep.step_count
        if reward == -2.0:
            assert ep.total_return == -(ep.final_tree.node_count - 1)


def test_env_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(reward_per_transition=0.5)
    with pytest.raises(ValueError):
        EnvConfig(gamma=0.9)


def test_rollout_determinism():
    inst = generate(preset_with_seed("tiny-mult_knapsack", 4))
    e1 = rollout(inst, eng.RandomBranching(), EnvConfig(), seed=11)
    e2 = rollout(inst, eng.RandomBranching(), EnvConfig(), seed=11)
    assert e1.transitions == e2.transitions
    assert e1.final_tree.node_count == e2.final_tree.node_count


def test_rollout_incumbent_matches_oracle():
    for seed in range(5):
        inst = generate(preset_with_seed("tiny-set_cover", seed))
        ep = rollout(inst, eng.RandomBranching(), EnvConfig(), seed=seed)
        truth = brute_force_optimum(inst)
        got = (ep.final_tree.incumbent.objective_value
               if ep.final_tree.incumbent else None)
        assert got == (truth.objective if truth.feasible else None)


def test_subtree_records_bellman_and_prefix_identities():
    inst = generate(preset_with_seed("tiny-mult_knapsack", 6))
    ep = rollout(inst, eng.RandomBranching(), EnvConfig(), seed=6)
    records = subtree_records(ep)
    tree = ep.final_tree
    assert len(records) == ep.step_count
    for r in records:
        both_pruned = r.minus_fathomed and r.plus_fathomed
        if both_pruned:
            assert r.nodes_added_below == 2
        rhs = 2
        rhs += 0 if r.minus_fathomed else r.child_minus.nodes_added_below
        rhs += 0 if r.plus_fathomed else r.child_plus.nodes_added_below
        assert r.nodes_added_below == rhs
    total = ep.step_count
    for t in range(total + 1):
        open_sum = sum(tree.nodes[i].subtree_nodes_added
                       for i in open_set_at_step(tree, t))
        assert open_sum == 2 * (total - t)


def test_subtree_records_refuse_truncated():
    inst = generate(preset_with_seed("small-set_cover", 0))
    ep = rollout(inst, eng.RandomBranching(), EnvConfig(max_steps=3), seed=0)
    assert ep.truncated
    with pytest.raises(ValueError):
        subtree_records(ep)


def test_treemdp_view_matches_records():
    inst = generate(preset_with_seed("tiny-mult_knapsack", 8))
    ep = rollout(inst, eng.RandomBranching(), EnvConfig(), seed=8)
    view = treemdp_view(ep)
    assert len(view) == ep.step_count
    # reconstruct nodes-added from the view
    added = {}
    for tr in reversed(view):
        a = 2
        a += 0 if tr.minus_terminal else added[tr.minus_id]
        a += 0 if tr.plus_terminal else added[tr.plus_id]
        added[tr.node_id] = a
    for r in subtree_records(ep):
        assert added[r.node_id] == r.nodes_added_below


def test_single_expansion_episode_view():
    # both children of the only expansion fathom -> one tuple, two terminals
    inst = make_instance(
        "one", [-3.0, -2.0], [0, 0], [1, 1], [0, 1],
        rows=[([(0, 1.0), (1, 1.0)], 1.0),
              ([(0, -1.0), (1, -1.0)], -1.0)],
    )
    ep = rollout(inst, eng.MostFractionalBranching(), EnvConfig(), seed=0)
    if ep.step_count == 1:
        (tr,) = treemdp_view(ep)
        assert tr.minus_terminal and tr.plus_terminal


def test_trace_round_trip(tmp_path):
    inst = generate(preset_with_seed("tiny-mult_knapsack", 2))
    ep = rollout(inst, eng.RandomBranching(), EnvConfig(), seed=2)
    path = tmp_path / "trace.jsonl"
    write_trace(ep, str(path))
    lines, footer = read_trace(str(path))
    assert len(lines) == ep.step_count
    assert footer["total_steps"] == ep.step_count
    assert footer["total_return"] == ep.total_return
    assert footer["node_count"] == ep.final_tree.node_count
    for step, line in enumerate(lines):
        assert line["step"] == step
        assert line["reward"] == ep.config.reward_per_transition


def test_context_search_dfs_has_no_witness():
    rep = bfs_context_counterexample(
        lambda s: generate(preset_with_seed("tiny-mult_knapsack", s)),
        range(20), selection_kind=eng.DFS, stop_at_first=False)
    assert not rep.found, rep.summary()


def test_context_search_bfs_finds_witness():
    rep = bfs_context_counterexample(
        lambda s: generate(preset_with_seed("tiny-mult_knapsack", s)),
        range(40), selection_kind=eng.BFS)
    # Existence is an empirical outcome; on this corpus a witness appears
    # within the first few seeds and the report carries its evidence.
    assert rep.found
    w = rep.witnesses[0]
    assert w.sizes[0] != w.sizes[1]
    assert "witness" in rep.summary()
