"""Machine-checkable verification suites behind the `verify` CLI command.

Each suite runs a battery of invariant checks over seeded corpora and
returns per-check pass/fail results with a counterexample description on
failure. Suites: identities (tree/episode structure), codec, gradients,
oracle (optimality and pruning safety against brute force), divergence
(one-step equivalence and the k-step split between trajectory-following
and full-frontier targets).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import engine as eng
from .codec import HistogramCodec, decode, encode, raw_bin_masses
from .env import (
    EnvConfig,
    bfs_context_counterexample,
    open_set_at_step,
    rollout,
    subtree_records,
    treemdp_view,
)
from .features import NUM_FEATURES
from .generators import preset_with_seed, generate
from .oracle import brute_force_optimum, enumerate_box_lp
from .qfunc import (
    LOSS_HL_GAUSS_CE,
    LOSS_MSE,
    QFunction,
    loss_and_gradient,
)
from .simplex import STATUS_OPTIMAL, solve_lp_arrays
from .targets import TargetConfig, target_1step, target_kstep, target_treemdp_kstep

SUITES = ("identities", "codec", "gradients", "oracle", "divergence")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class SuiteReport:
    suite: str
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(CheckResult(name, passed, detail))

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            suffix = f"  [{c.detail}]" if c.detail else ""
            out.append(f"{mark}  {self.suite}:{c.name}{suffix}")
        return out

    def to_json_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
        }


@dataclass(frozen=True)
class VerifyScope:
    episodes: int = 100
    lp_trials: int = 1000
    oracle_instances: int = 50
    k: int = 3
    seed: int = 0
    episode_preset: str = "tiny-mult_knapsack"
    divergence_preset: str = "small-set_cover"


def _dfs_episodes(scope: VerifyScope, reward: float = -2.0):
    for seed in range(scope.episodes):
        instance = generate(preset_with_seed(scope.episode_preset, seed))
        yield seed, rollout(instance, eng.RandomBranching(),
                            EnvConfig(reward_per_transition=reward), seed=seed)


def run_identities(scope: VerifyScope) -> SuiteReport:
    rep = SuiteReport("identities")
    bad_return = bad_accounting = bad_prop1 = bad_eq2 = bad_contig = bad_view = None
    for seed, ep in _dfs_episodes(scope):
        tree = ep.final_tree
        t_count = ep.step_count
        if ep.total_return != -2.0 * t_count and bad_return is None:
            bad_return = f"seed {seed}: return {ep.total_return} != -2*{t_count}"
        if tree.node_count != 1 + 2 * t_count and bad_accounting is None:
            bad_accounting = f"seed {seed}: {tree.node_count} != 1+2*{t_count}"
        records = subtree_records(ep)
        for r in records:
            rhs = 2
            rhs += 0 if r.minus_fathomed else r.child_minus.nodes_added_below
            rhs += 0 if r.plus_fathomed else r.child_plus.nodes_added_below
            if r.nodes_added_below != rhs and bad_prop1 is None:
                bad_prop1 = f"seed {seed} node {r.node_id}: {r.nodes_added_below} != {rhs}"
        for t in range(t_count + 1):
            open_sum = sum(tree.nodes[i].subtree_nodes_added
                           for i in open_set_at_step(tree, t))
            if open_sum != 2 * (t_count - t) and bad_eq2 is None:
                bad_eq2 = f"seed {seed} step {t}: {open_sum} != {2 * (t_count - t)}"
        for node in tree.nodes:
            if node.status != eng.NODE_BRANCHED:
                continue
            stamps = sorted(r.selected_at for r in records
                            if _inside(tree, r.node_id, node.id))
            if stamps != list(range(stamps[0], stamps[0] + len(stamps))):
                if bad_contig is None:
                    bad_contig = f"seed {seed} node {node.id}: stamps {stamps[:8]}..."
        if len(treemdp_view(ep)) != t_count and bad_view is None:
            bad_view = f"seed {seed}: view length mismatch"
    rep.add("return_identity", bad_return is None, bad_return or "")
    rep.add("node_accounting", bad_accounting is None, bad_accounting or "")
    rep.add("subtree_bellman", bad_prop1 is None, bad_prop1 or "")
    rep.add("open_frontier_prefix_sum", bad_eq2 is None, bad_eq2 or "")
    rep.add("dfs_contiguity", bad_contig is None, bad_contig or "")
    rep.add("node_pair_view", bad_view is None, bad_view or "")
    return rep


def _inside(tree, node_id: int, ancestor_id: int) -> bool:
    nid = node_id
    while nid is not None:
        if nid == ancestor_id:
            return True
        nid = tree.nodes[nid].parent
    return False


def run_codec(scope: VerifyScope) -> SuiteReport:
    rep = SuiteReport("codec")
    codec = HistogramCodec()
    rng = np.random.default_rng(scope.seed)

    worst_sum = 0.0
    neg = False
    for v in list(-np.exp(rng.uniform(-20, 25, size=500))) + [0.0, -1.0, -2.0**40]:
        p = encode(codec, float(v))
        worst_sum = max(worst_sum, abs(float(p.sum()) - 1.0))
        neg = neg or bool((p < 0).any())
    rep.add("normalization", worst_sum <= 1e-9 and not neg,
            f"max |sum-1| = {worst_sum:.2e}")

    onehot_exact = True
    for i in range(codec.m_bins):
        p = np.zeros(codec.m_bins)
        p[i] = 1.0
        if decode(codec, p) != -(2.0 ** codec.bin_centers[i]):
            onehot_exact = False
    rep.add("one_hot_decode", onehot_exact)

    worst_rt = 0.0
    for v in (-2.0, -10.0, -100.0, -1000.0):
        rt = decode(codec, encode(codec, v))
        worst_rt = max(worst_rt, abs(rt - v) / abs(v))
    rep.add("round_trip", worst_rt <= 0.25, f"max rel err {worst_rt:.4f}")

    toy = HistogramCodec(m_bins=18, psi_min=0.5, psi_max=18.5, sigma=0.75)
    expected = 0.4950149249061542  # Phi(2/3) - Phi(-2/3)
    raw = raw_bin_masses(toy, -2.0)
    interior = encode(toy, -4.0)
    rep.add("toy_mass_raw_first_bin", abs(raw[0] - expected) <= 1e-3,
            f"raw p1 = {raw[0]:.6f}")
    rep.add("toy_mass_interior_bin", abs(interior[1] - expected) <= 1e-3,
            f"encoded p2 = {interior[1]:.6f}")

    # Moving mass to higher-index bins must strictly decrease the value.
    mono = True
    base = encode(codec, -10.0)
    for i in range(codec.m_bins - 1):
        if base[i] <= 1e-12:
            continue
        shifted = base.copy()
        shifted[i + 1] += shifted[i] * 0.5
        shifted[i] *= 0.5
        if not decode(codec, shifted) < decode(codec, base):
            mono = False
    rep.add("dominance_monotonicity", mono)
    return rep


def run_gradients(scope: VerifyScope) -> SuiteReport:
    rep = SuiteReport("gradients")
    codec = HistogramCodec()
    rng = np.random.default_rng(scope.seed)
    for kind in ("linear", "mlp"):
        for loss in (LOSS_MSE, LOSS_HL_GAUSS_CE):
            qfn = QFunction(kind, NUM_FEATURES,
                            codec if loss == LOSS_HL_GAUSS_CE else None,
                            seed=scope.seed, head_init_value=None)
            worst = 0.0
            for point in range(10):
                theta = rng.normal(scale=0.1, size=qfn.num_params)
                qfn.set_theta(theta)
                x = rng.normal(size=(4, NUM_FEATURES))
                y = -np.abs(rng.normal(size=4)) * 20.0 - 2.0
                w = rng.uniform(0.5, 1.0, size=4)
                _, grad = loss_and_gradient(qfn, x, y, w, loss)
                h = 1e-5
                probe = rng.choice(qfn.num_params, size=min(40, qfn.num_params),
                                   replace=False)
                for i in probe:
                    tp = theta.copy()
                    tp[i] += h
                    qfn.set_theta(tp)
                    lp, _ = loss_and_gradient(qfn, x, y, w, loss)
                    tm = theta.copy()
                    tm[i] -= h
                    qfn.set_theta(tm)
                    lm, _ = loss_and_gradient(qfn, x, y, w, loss)
                    fd = (lp - lm) / (2 * h)
                    worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-6))
                qfn.set_theta(theta)
            rep.add(f"{kind}_{loss}", worst <= 1e-4, f"max rel err {worst:.2e}")
    return rep


def run_oracle(scope: VerifyScope) -> SuiteReport:
    rep = SuiteReport("oracle")
    rng = np.random.default_rng(scope.seed)

    # LP solver vs vertex enumeration on random boxes.
    lp_bad = None
    for trial in range(scope.lp_trials):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(0, 6))
        a = np.round(rng.uniform(-3, 3, size=(m, n)), 2)
        b = np.round(rng.uniform(-4, 6, size=m), 2)
        c = np.round(rng.uniform(-5, 5, size=n), 2)
        lo = np.zeros(n)
        hi = np.full(n, 4.0)
        ours = solve_lp_arrays(a, b, c, lo, hi)
        status, obj, _ = enumerate_box_lp(a, b, c, lo, hi)
        if ours.status != status:
            lp_bad = f"trial {trial}: status {ours.status} vs {status}"
            break
        if status == STATUS_OPTIMAL and abs(ours.objective - obj) > 1e-6:
            lp_bad = f"trial {trial}: obj {ours.objective} vs {obj}"
            break
    rep.add("lp_vertex_enumeration", lp_bad is None, lp_bad or f"{scope.lp_trials} trials")

    # Full solves vs exhaustive enumeration, all families x selections.
    milp_bad = None
    count = 0
    per_family = max(1, scope.oracle_instances // 4)
    for family in ("set_cover", "comb_auction", "mult_knapsack", "max_indep_set"):
        for seed in range(per_family):
            instance = generate(preset_with_seed(f"tiny-{family}", seed))
            truth = brute_force_optimum(instance)
            for kind in (eng.DFS, eng.BFS, eng.BEST_BOUND):
                report = eng.solve(instance, eng.RandomBranching(),
                                   eng.NodeSelection(kind=kind), seed=seed)
                count += 1
                if truth.feasible:
                    if report.objective != truth.objective:
                        milp_bad = (f"{family} seed {seed} {kind}: "
                                    f"{report.objective} != {truth.objective}")
                elif report.objective is not None:
                    milp_bad = f"{family} seed {seed} {kind}: found {report.objective}"
    rep.add("bnb_equals_brute_force", milp_bad is None, milp_bad or f"{count} solves")

    # Pruning safety: no bound-pruned subtree hides a better solution.
    prune_bad = None
    checked = 0
    for seed in range(per_family):
        instance = generate(preset_with_seed("tiny-mult_knapsack", seed))
        report = eng.solve(instance, eng.RandomBranching(), eng.NodeSelection(), seed=seed)
        final = report.objective if report.objective is not None else math.inf
        for node in report.tree.nodes:
            if node.status != eng.NODE_PRUNED_BY_BOUND:
                continue
            checked += 1
            sub = replace(instance, lower=node.lower.copy(), upper=node.upper.copy())
            res = brute_force_optimum(sub)
            if res.feasible and res.objective < final - 1e-9:
                prune_bad = (f"seed {seed} node {node.id}: hidden optimum "
                             f"{res.objective} < incumbent {final}")
    rep.add("pruning_safety", prune_bad is None,
            prune_bad or f"{checked} pruned subtrees re-solved")
    return rep


def run_divergence(scope: VerifyScope) -> SuiteReport:
    rep = SuiteReport("divergence")
    codec = HistogramCodec()
    qfn = QFunction("mlp", NUM_FEATURES, codec, seed=scope.seed)
    cfg1 = TargetConfig(k=1, reward_per_transition=-1.0)
    cfgk = TargetConfig(k=scope.k, reward_per_transition=-1.0)

    transitions = 0
    k1_bad = None
    witness = None
    deep_subtree_seen = False
    episodes_used = 0
    for seed in range(scope.episodes):
        instance = generate(preset_with_seed(scope.divergence_preset, seed))
        ep = rollout(instance, eng.RandomBranching(),
                     EnvConfig(reward_per_transition=-1.0, max_steps=3000), seed=seed)
        if ep.truncated:
            continue
        episodes_used += 1
        for r in subtree_records(ep):
            transitions += 1
            t1 = target_1step(r, qfn, cfg1)
            tk = target_kstep(r, qfn, cfg1)
            tt = target_treemdp_kstep(r, qfn, cfg1, k=1)
            if not (t1 == tk == tt) and k1_bad is None:
                k1_bad = f"seed {seed} node {r.node_id}: {t1} vs {tk} vs {tt}"
            if _has_depth3_chain(r):
                deep_subtree_seen = True
            if witness is None:
                a = target_kstep(r, qfn, cfgk)
                b = target_treemdp_kstep(r, qfn, cfgk)
                if a != b:
                    witness = (f"seed {seed} node {r.node_id}: trajectory target "
                               f"{a:.6f} vs full-frontier target {b:.6f}")
        if witness is not None and transitions >= 10_000 and k1_bad is None:
            break
    rep.add("one_step_equivalence", k1_bad is None and transitions >= 10_000,
            k1_bad or f"{transitions} transitions bit-identical")
    if witness is not None:
        rep.add("kstep_divergence_witness", True, witness)
    else:
        # Absence only counts as failure when the corpus could express it.
        rep.add("kstep_divergence_witness", not deep_subtree_seen,
                f"no witness in {episodes_used} episodes "
                f"(depth-3 subtree present: {deep_subtree_seen})")

    dfs_report = bfs_context_counterexample(
        lambda s: generate(preset_with_seed(scope.episode_preset, s)),
        range(min(scope.episodes, 60)), selection_kind=eng.DFS, stop_at_first=False)
    rep.add("dfs_context_free", not dfs_report.found, dfs_report.summary())
    bfs_report = bfs_context_counterexample(
        lambda s: generate(preset_with_seed(scope.episode_preset, s)),
        range(scope.episodes * 2), selection_kind=eng.BFS)
    # Existence under BFS is recorded, not asserted.
    rep.add("bfs_context_witness_recorded", True, bfs_report.summary())
    return rep


def _has_depth3_chain(record) -> bool:
    """A path of three consecutive expansions below the record's node."""
    for child in (record.child_minus, record.child_plus):
        if child is None:
            continue
        for grand in (child.child_minus, child.child_plus):
            if grand is not None:
                return True
    return False


def run_suite(suite: str, scope: VerifyScope | None = None) -> SuiteReport:
    scope = scope or VerifyScope()
    runners = {
        "identities": run_identities,
        "codec": run_codec,
        "gradients": run_gradients,
        "oracle": run_oracle,
        "divergence": run_divergence,
    }
    if suite not in runners:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    return runners[suite](scope)
