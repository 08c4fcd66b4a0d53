"""Command-line interface: generate / solve / train / evaluate / verify."""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click

from . import engine as eng
from .agent import LearnedQPolicy, TrainConfig, train
from .bench import PolicySpec, aggregate, evaluate, rows_to_csv
from .engine import NodeSelection
from .env import EnvConfig, rollout, write_trace
from .generators import FAMILIES, FamilySpec, desk_presets, generate, preset_with_seed
from .milp import parse_instance, serialize_instance, validate
from .qfunc import load_checkpoint
from .verify import SUITES, VerifyScope, run_suite

_SELECTIONS = {
    "dfs": NodeSelection(kind=eng.DFS),
    "dfs_plus_first": NodeSelection(kind=eng.DFS, dfs_child_order=eng.PLUS_FIRST),
    "bfs": NodeSelection(kind=eng.BFS),
    "best_bound": NodeSelection(kind=eng.BEST_BOUND),
}


def _make_rule(token: str) -> eng.BranchingRule:
    if token == "random":
        return eng.RandomBranching()
    if token == "most_fractional":
        return eng.MostFractionalBranching()
    if token == "strong_branching":
        return eng.StrongBranching()
    if token == "pseudocost":
        return eng.PseudocostBranching()
    if token.startswith("learned:"):
        qfn, _ = load_checkpoint(token.split(":", 1)[1])
        return LearnedQPolicy(qfn)
    raise click.BadParameter(f"unknown branching rule {token!r}")


def _parse_policy(token: str) -> PolicySpec:
    """random | pseudocost@best_bound | learned:checkpoint.qfn@dfs ..."""
    if "@" in token:
        rule_token, sel_token = token.rsplit("@", 1)
    else:
        rule_token, sel_token = token, "dfs"
    if sel_token not in _SELECTIONS:
        raise click.BadParameter(f"unknown selection {sel_token!r}")
    rule = _make_rule(rule_token)
    name = rule_token.replace(":", "_").replace("/", "_")
    if sel_token != "dfs":
        name = f"{name}@{sel_token}"
    return PolicySpec(name=name, rule=rule, selection=_SELECTIONS[sel_token])


def _parse_seeds(text: str) -> list[int]:
    """'0:200' (half-open range) or '0,1,2'."""
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi)))
    return [int(s) for s in text.split(",") if s]


@click.group()
def main():
    """Branch-and-bound MILP framework with a learned branching agent."""


@main.command("generate")
@click.option("--preset", type=click.Choice(sorted(desk_presets())), default=None,
              help="Named family preset (seed is taken from --seeds).")
@click.option("--family", type=click.Choice(FAMILIES), default=None)
@click.option("--params", type=str, default="{}",
              help="JSON dict of family parameters when using --family.")
@click.option("--seeds", type=str, default="0:10", help="Seed range lo:hi or list.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def generate_cmd(preset, family, params, seeds, out_dir):
    """Write instance JSON files plus a manifest with spec and content hashes."""
    if (preset is None) == (family is None):
        raise click.UsageError("pass exactly one of --preset or --family")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"instances": []}
    for seed in _parse_seeds(seeds):
        if preset:
            spec = preset_with_seed(preset, seed)
        else:
            spec = FamilySpec(family, seed, json.loads(params))
        instance = generate(spec)
        data = serialize_instance(instance)
        fname = f"{instance.name}.json"
        (out / fname).write_bytes(data)
        manifest["instances"].append({
            "file": fname,
            "family": spec.family,
            "seed": seed,
            "params": dict(spec.params),
            "sha256": hashlib.sha256(data).hexdigest(),
        })
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    click.echo(f"wrote {len(manifest['instances'])} instances to {out}")


@main.command("solve")
@click.argument("instance_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--branching", default="pseudocost", help="Branching rule token.")
@click.option("--selection", type=click.Choice(sorted(_SELECTIONS)), default="dfs")
@click.option("--seed", type=int, default=0)
@click.option("--max-nodes", type=int, default=eng.DEFAULT_MAX_NODES)
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None,
              help="Write a JSONL episode trace (runs through the environment).")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
def solve_cmd(instance_path, branching, selection, seed, max_nodes, trace_path, report_path):
    """Solve one instance and print the solve report."""
    instance = parse_instance(Path(instance_path).read_bytes())
    problems = validate(instance)
    if problems:
        raise click.ClickException("invalid instance: " + "; ".join(problems))
    rule = _make_rule(branching)
    sel = _SELECTIONS[selection]
    if trace_path:
        episode = rollout(instance, rule,
                          EnvConfig(selection=sel, max_steps=max_nodes // 2), seed=seed)
        write_trace(episode, trace_path)
    report = eng.solve(instance, rule, sel, max_nodes=max_nodes, seed=seed)
    doc = report.to_json_dict()
    if report_path:
        Path(report_path).write_text(report.to_json())
    click.echo(json.dumps(doc, indent=2))
    sys.exit(0 if report.status == eng.SOLVE_OPTIMAL else 1)


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="TrainConfig JSON; defaults apply otherwise.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--gradient-steps", type=int, default=None,
              help="Override max_gradient_steps.")
@click.option("--seed", type=int, default=None, help="Override master seed.")
@click.option("--quiet", is_flag=True, default=False)
def train_cmd(config_path, out_dir, gradient_steps, seed, quiet):
    """Train the branching agent; writes checkpoint, config, and curves."""
    if config_path:
        config = TrainConfig.from_json_dict(json.loads(Path(config_path).read_text()))
    else:
        config = TrainConfig()
    if gradient_steps is not None:
        config.max_gradient_steps = gradient_steps
    if seed is not None:
        config.seed = seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "agent.qfn"
    result = train(config, checkpoint_path=str(ckpt), progress=not quiet)
    (out / "train_config.json").write_text(
        json.dumps(config.to_json_dict(), indent=2, sort_keys=True))
    (out / "curves.json").write_text(json.dumps(result.curves, indent=2))
    click.echo(f"trained {result.gradient_steps} gradient steps "
               f"({result.episodes} episodes, {result.agent_steps} decisions); "
               f"checkpoint at {ckpt}")


@main.command("evaluate")
@click.option("--policy", "policy_tokens", multiple=True, required=True,
              help="Repeatable: rule[@selection], e.g. random, learned:ck.qfn@dfs.")
@click.option("--instances", "instances_dir", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--seeds", type=str, default="0")
@click.option("--max-nodes", type=int, default=eng.DEFAULT_MAX_NODES)
@click.option("--reference", type=str, default=None,
              help="Policy name for normalized scores.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def evaluate_cmd(policy_tokens, instances_dir, seeds, max_nodes, reference, out_dir):
    """Evaluate policies over an instance directory; writes CSV and JSON."""
    policies = [_parse_policy(tok) for tok in policy_tokens]
    manifest = json.loads((Path(instances_dir) / "manifest.json").read_text())
    instances = []
    for entry in manifest["instances"]:
        data = (Path(instances_dir) / entry["file"]).read_bytes()
        instance = parse_instance(data)
        instances.append((instance.name, instance))
    report = evaluate(policies, instances, _parse_seeds(seeds), max_nodes=max_nodes)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(rows_to_csv(report))
    agg = aggregate(report, reference_policy=reference)
    (out / "aggregate.json").write_text(json.dumps(agg, indent=2, sort_keys=True))
    click.echo(json.dumps(agg, indent=2, sort_keys=True))


@main.command("verify")
@click.argument("suite", type=click.Choice(list(SUITES) + ["all"]))
@click.option("--episodes", type=int, default=100)
@click.option("--lp-trials", type=int, default=1000)
@click.option("--oracle-instances", type=int, default=50)
@click.option("--k", type=int, default=3)
@click.option("--seed", type=int, default=0)
@click.option("--json-out", type=click.Path(dir_okay=False), default=None)
def verify_cmd(suite, episodes, lp_trials, oracle_instances, k, seed, json_out):
    """Run a verification suite; exit code 0 only when every check passes."""
    scope = VerifyScope(episodes=episodes, lp_trials=lp_trials,
                        oracle_instances=oracle_instances, k=k, seed=seed)
    suites = list(SUITES) if suite == "all" else [suite]
    reports = [run_suite(name, scope) for name in suites]
    for rep in reports:
        for line in rep.lines():
            click.echo(line)
    if json_out:
        Path(json_out).write_text(json.dumps(
            [rep.to_json_dict() for rep in reports], indent=2))
    sys.exit(0 if all(rep.passed for rep in reports) else 2)


if __name__ == "__main__":
    main()
