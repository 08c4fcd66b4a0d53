"""The branching decision process over whole search trees.

State is the entire tree (with incumbent); an action picks a fractional
variable at the focus node chosen by the node selection policy; one step
performs one expansion (two new nodes) and yields a constant negative
reward, so episode return is proportional to the number of nodes added.
Actions outside the focus node's fractional candidate set are rejected
rather than self-looping, which preserves the optimal policy and
guarantees termination.

Episodes additionally record per-node feature matrices captured at
selection time, from which per-subtree training records are derived.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import engine as eng
from .engine import BranchContext, BranchingRule, NodeSelection, SearchTree
from .features import featurize
from .milp import MilpInstance

DEFAULT_REWARD = -2.0


@dataclass(frozen=True)
class EnvConfig:
    reward_per_transition: float = DEFAULT_REWARD
    selection: NodeSelection = field(default_factory=NodeSelection)
    gamma: float = 1.0
    max_steps: int | None = None
    use_lp_cache: bool = True

    def __post_init__(self):
        if self.reward_per_transition >= 0:
            raise ValueError("reward_per_transition must be negative")
        if self.gamma != 1.0:
            raise ValueError("the decision process is undiscounted (gamma fixed at 1)")


@dataclass
class FeatureCapture:
    candidates: tuple[int, ...]
    matrix: np.ndarray


@dataclass
class Episode:
    instance: MilpInstance
    transitions: list[tuple[int, int, float]]  # (focus node id, action var, reward)
    final_tree: SearchTree
    total_return: float
    truncated: bool
    captures: dict[int, FeatureCapture]
    config: EnvConfig

    @property
    def step_count(self) -> int:
        return len(self.transitions)


class BranchingEnv:
    """Stepwise interface around the search engine for one episode."""

    def __init__(self, instance: MilpInstance, config: EnvConfig | None = None):
        self.instance = instance
        self.config = config or EnvConfig()
        self.tree: SearchTree | None = None
        self.focus: int | None = None
        self.captures: dict[int, FeatureCapture] = {}
        self.transitions: list[tuple[int, int, float]] = []

    def reset(self) -> tuple[SearchTree, bool]:
        self.tree = eng.init_tree(self.instance, self.config.selection,
                                  use_lp_cache=self.config.use_lp_cache)
        self.captures = {}
        self.transitions = []
        self.focus = None
        done = not self.tree.open_ids
        if not done:
            self._select_focus()
        return self.tree, done

    def _select_focus(self) -> None:
        nid = eng.select_node(self.tree, self.config.selection)
        cands = eng.fractional_candidates(self.tree, nid)
        matrix = featurize(self.tree, nid, cands, self.tree.pseudocosts)
        self.captures[nid] = FeatureCapture(tuple(cands), matrix)
        self.focus = nid

    @property
    def done(self) -> bool:
        return self.tree is not None and self.focus is None

    def candidates(self) -> list[int]:
        if self.focus is None:
            raise ValueError("episode is terminal")
        return list(self.captures[self.focus].candidates)

    def step(self, action: int) -> tuple[SearchTree, float, bool]:
        """Expand the focus node on `action`; rejects non-candidate actions
        with the state unchanged."""
        if self.focus is None:
            raise ValueError("episode is terminal")
        capture = self.captures[self.focus]
        if action not in capture.candidates:
            raise ValueError(
                f"action {action} is not a fractional candidate at node {self.focus}")
        reward = self.config.reward_per_transition
        eng.expand(self.tree, self.focus, action)
        self.transitions.append((self.focus, action, reward))
        self.focus = None
        done = not self.tree.open_ids
        if not done:
            self._select_focus()
        return self.tree, reward, done

    def finish(self, truncated: bool) -> Episode:
        eng.fill_subtree_counts(self.tree)
        reward = self.config.reward_per_transition
        return Episode(
            instance=self.instance,
            transitions=list(self.transitions),
            final_tree=self.tree,
            total_return=reward * len(self.transitions),
            truncated=truncated,
            captures=dict(self.captures),
            config=self.config,
        )


def rollout(instance: MilpInstance, policy: BranchingRule,
            config: EnvConfig | None = None, seed: int = 0) -> Episode:
    """Play one full episode under `policy`; deterministic given the seed."""
    config = config or EnvConfig()
    env = BranchingEnv(instance, config)
    _, done = env.reset()
    ctx = BranchContext(rng=np.random.default_rng(seed), stats=env.tree.pseudocosts)
    truncated = False
    while not done:
        if config.max_steps is not None and len(env.transitions) >= config.max_steps:
            truncated = True
            break
        cands = env.candidates()
        action = policy.select(env.tree, env.focus, cands, ctx)
        _, _, done = env.step(action)
    return env.finish(truncated)


@dataclass
class SubtreeRecord:
    """Everything known about one expanded node's subtree: features seen at
    selection, the action taken, and the realized size below it."""

    node_id: int
    selected_at: int
    candidates: tuple[int, ...]
    features: np.ndarray
    action_var: int
    action_row: int
    nodes_added_below: int
    child_minus: "SubtreeRecord | None"
    child_plus: "SubtreeRecord | None"
    minus_fathomed: bool
    plus_fathomed: bool


def subtree_records(episode: Episode) -> list[SubtreeRecord]:
    """One record per branched node, in selection order. Requires a
    completed episode: truncated trees carry unusable subtree sizes."""
    if episode.truncated:
        raise ValueError("subtree records are undefined for truncated episodes")
    tree = episode.final_tree
    by_id: dict[int, SubtreeRecord] = {}
    order = sorted(
        (n for n in tree.nodes if n.status == eng.NODE_BRANCHED),
        key=lambda n: n.selected_at,
        reverse=True,
    )
    for node in order:  # children before parents (later selection first)
        capture = episode.captures[node.id]
        minus = tree.nodes[node.child_minus]
        plus = tree.nodes[node.child_plus]
        record = SubtreeRecord(
            node_id=node.id,
            selected_at=node.selected_at,
            candidates=capture.candidates,
            features=capture.matrix,
            action_var=node.branch_var,
            action_row=capture.candidates.index(node.branch_var),
            nodes_added_below=node.subtree_nodes_added,
            child_minus=by_id.get(minus.id),
            child_plus=by_id.get(plus.id),
            minus_fathomed=minus.status != eng.NODE_BRANCHED,
            plus_fathomed=plus.status != eng.NODE_BRANCHED,
        )
        by_id[node.id] = record
    return sorted(by_id.values(), key=lambda r: r.selected_at)


@dataclass(frozen=True)
class TreeMdpTransition:
    """One expansion viewed as a node-to-two-children transition; pruned
    children are terminal markers."""

    node_id: int
    action_var: int
    minus_id: int
    plus_id: int
    minus_terminal: bool
    plus_terminal: bool


def treemdp_view(episode: Episode) -> list[TreeMdpTransition]:
    if episode.truncated:
        raise ValueError("view is undefined for truncated episodes")
    tree = episode.final_tree
    out = []
    for node in sorted(
        (n for n in tree.nodes if n.status == eng.NODE_BRANCHED),
        key=lambda n: n.selected_at,
    ):
        minus = tree.nodes[node.child_minus]
        plus = tree.nodes[node.child_plus]
        out.append(
            TreeMdpTransition(
                node_id=node.id,
                action_var=node.branch_var,
                minus_id=minus.id,
                plus_id=plus.id,
                minus_terminal=minus.status != eng.NODE_BRANCHED,
                plus_terminal=plus.status != eng.NODE_BRANCHED,
            )
        )
    return out


def open_set_at_step(tree: SearchTree, t: int) -> list[int]:
    """Reconstruct the open set after t transitions from creation/selection
    stamps on the final tree."""
    out = []
    for node in tree.nodes:
        if node.status not in (eng.NODE_BRANCHED, eng.NODE_OPEN):
            continue
        if node.created_at > t:
            continue
        if node.status == eng.NODE_BRANCHED and node.selected_at < t:
            continue
        out.append(node.id)
    return out


@dataclass
class ContextWitness:
    instance_seed: int
    bound_path: tuple
    gub_at_selection: float
    sizes: tuple[int, int]
    episode_tags: tuple[str, str]


@dataclass
class ContextSearchReport:
    """Outcome of searching for nodes whose subtree size depends on context
    beyond (sub-problem, incumbent-at-selection)."""

    selection_kind: str
    witnesses: list[ContextWitness]
    instances_checked: int
    groups_compared: int

    @property
    def found(self) -> bool:
        return bool(self.witnesses)

    def summary(self) -> str:
        if not self.found:
            return (f"none found in range ({self.instances_checked} instances, "
                    f"{self.groups_compared} matched-state groups)")
        w = self.witnesses[0]
        return (f"witness on instance seed {w.instance_seed}: node {w.bound_path} "
                f"selected at gub={w.gub_at_selection} grew subtrees of "
                f"{w.sizes[0]} vs {w.sizes[1]} nodes ({w.episode_tags[0]} vs "
                f"{w.episode_tags[1]})")


def _node_bound_path(tree: SearchTree, node) -> tuple:
    root = tree.nodes[0]
    diffs = []
    for j in range(tree.instance.num_vars):
        if node.lower[j] != root.lower[j] or node.upper[j] != root.upper[j]:
            diffs.append((j, float(node.lower[j]), float(node.upper[j])))
    return tuple(diffs)


def _subtree_action_map(tree: SearchTree, node_id: int) -> dict[tuple, int]:
    out = {}
    stack = [node_id]
    while stack:
        nid = stack.pop()
        node = tree.nodes[nid]
        if node.status != eng.NODE_BRANCHED:
            continue
        out[_node_bound_path(tree, node)] = node.branch_var
        stack.append(node.child_minus)
        stack.append(node.child_plus)
    return out


class HashBranching(BranchingRule):
    """Deterministic pseudo-random branching: the choice is a stable hash of
    the node's effective bounds and a policy seed, hence a pure function of
    the sub-problem. Different seeds give different policies whose episodes
    can be compared node by node."""

    name = "hash"

    def __init__(self, policy_seed: int):
        self.policy_seed = policy_seed

    def select(self, tree, node_id, candidates, ctx):
        from .rng import splitmix64

        node = tree.nodes[node_id]
        h = self.policy_seed & ((1 << 64) - 1)
        for byte in node.lower.tobytes() + node.upper.tobytes():
            h = (h * 1099511628211 + byte) & ((1 << 64) - 1)
        _, word = splitmix64(h)
        return candidates[word % len(candidates)]


def bfs_context_counterexample(instance_fn, seed_range, selection_kind: str = eng.BFS,
                               max_steps: int = 4000, policies: int = 4,
                               stop_at_first: bool = True) -> ContextSearchReport:
    """Search seeded instances for a node that appears in two episodes with
    the same sub-problem and the same incumbent at selection, agrees with the
    other episode on every branching decision the two subtrees share, yet
    grows subtrees of different sizes. Under breadth-first selection such
    witnesses exist because the incumbent can improve mid-subtree from
    discoveries in sibling subtrees; under depth-first selection (same child
    order, decisions a pure function of the sub-problem) agreement on shared
    decisions forces identical subtrees, so the same search must come up
    empty.

    Episodes per instance differ only in the branching-policy seed; node
    selection, child order, and everything else stay fixed.
    """
    witnesses: list[ContextWitness] = []
    groups = 0
    checked = 0
    for seed in seed_range:
        instance = instance_fn(seed)
        pool: dict[tuple, list[tuple[int, dict, str]]] = {}
        complete = True
        for policy_seed in range(policies):
            config = EnvConfig(
                reward_per_transition=-2.0,
                selection=NodeSelection(kind=selection_kind),
                max_steps=max_steps,
            )
            episode = rollout(instance, HashBranching(policy_seed), config, seed=0)
            if episode.truncated:
                complete = False
                break
            tree = episode.final_tree
            tag = f"seed{seed}-pi{policy_seed}"
            for node in tree.nodes:
                if node.status != eng.NODE_BRANCHED:
                    continue
                key = (_node_bound_path(tree, node), node.incumbent_at_selection)
                pool.setdefault(key, []).append(
                    (node.subtree_nodes_added, _subtree_action_map(tree, node.id), tag))
        checked += 1
        if not complete:
            continue
        for (path, gub), entries in pool.items():
            if len(entries) < 2:
                continue
            groups += 1
            for i in range(len(entries)):
                for j in range(i + 1, len(entries)):
                    size_a, map_a, tag_a = entries[i]
                    size_b, map_b, tag_b = entries[j]
                    if size_a == size_b:
                        continue
                    shared = set(map_a) & set(map_b)
                    if all(map_a[k] == map_b[k] for k in shared):
                        witnesses.append(ContextWitness(
                            instance_seed=seed,
                            bound_path=path,
                            gub_at_selection=gub,
                            sizes=(size_a, size_b),
                            episode_tags=(tag_a, tag_b),
                        ))
                        if stop_at_first:
                            return ContextSearchReport(
                                selection_kind, witnesses, checked, groups)
    return ContextSearchReport(selection_kind, witnesses, checked, groups)


def write_trace(episode: Episode, path: str) -> None:
    """Episode trace as JSON Lines: one line per transition plus a footer
    with totals."""
    tree = episode.final_tree
    with open(path, "w", encoding="utf-8") as fh:
        for step, (focus, action, reward) in enumerate(episode.transitions):
            open_count = len(open_set_at_step(tree, step + 1))
            gub = tree.nodes[focus].incumbent_at_selection
            fh.write(json.dumps({
                "step": step,
                "focus_node": focus,
                "action": action,
                "reward": reward,
                "open_count": open_count,
                "gub": None if gub == math.inf else gub,
            }, separators=(",", ":")) + "\n")
        fh.write(json.dumps({
            "total_steps": episode.step_count,
            "total_return": episode.total_return,
            "node_count": tree.node_count,
            "truncated": episode.truncated,
            "objective": tree.incumbent.objective_value if tree.incumbent else None,
        }, separators=(",", ":")) + "\n")


def read_trace(path: str) -> tuple[list[dict], dict]:
    with open(path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    return lines[:-1], lines[-1]
