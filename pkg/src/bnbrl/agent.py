"""DQN training for the branching agent.

One episode = one full depth-first solve under combined epsilon-greedy and
Boltzmann exploration; transitions are assembled post-hoc from completed
(non-truncated) episodes and pushed into prioritized replay. Every
`steps_per_update` branching decisions the learner draws a batch, computes
k-step targets with the target network (double-Q), applies one clipped Adam
step, soft-updates the target parameters, and refreshes priorities with the
new TD errors. The whole loop is single-threaded and fully seeded, so runs
repeat bit-for-bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import engine as eng
from .codec import HistogramCodec
from .engine import BranchingRule, NodeSelection
from .env import BranchingEnv, EnvConfig, subtree_records
from .features import NUM_FEATURES, featurize
from .generators import FamilySpec, generate, preset_with_seed
from .qfunc import (
    Adam,
    LOSS_HL_GAUSS_CE,
    LOSS_MSE,
    QFunction,
    TrainingError,
    clip_gradient,
    loss_and_gradient,
    save_checkpoint,
    soft_update,
)
from .replay import ReplayBuffer
from .targets import (
    STYLE_BBMDP,
    TargetConfig,
    batch_transition_targets,
    build_transition,
)

MODE_EXPLORE = "explore"
MODE_GREEDY = "greedy"


@dataclass(frozen=True)
class ExplorationSchedule:
    """Linear decays floored at the minima (the published decays are
    per-step decrements, not multipliers)."""

    epsilon_init: float = 1.0
    epsilon_min: float = 0.025
    epsilon_decay: float = 1e-4
    temp_init: float = 1.0
    temp_min: float = 1e-3
    temp_decay: float = 1e-5

    def epsilon(self, agent_step: int) -> float:
        return max(self.epsilon_min, self.epsilon_init - self.epsilon_decay * agent_step)

    def temperature(self, agent_step: int) -> float:
        return max(self.temp_min, self.temp_init - self.temp_decay * agent_step)


def act(qfn: QFunction, feature_matrix: np.ndarray, schedule: ExplorationSchedule,
        agent_step: int, rng: np.random.Generator, mode: str = MODE_EXPLORE) -> int:
    """Pick a candidate row: greedy argmax (ties to the lowest row, i.e.
    lowest variable index), or epsilon-uniform / Boltzmann otherwise."""
    values = qfn.values(feature_matrix)
    if mode == MODE_GREEDY:
        return int(np.argmax(values))
    if mode != MODE_EXPLORE:
        raise ValueError(f"unknown acting mode {mode!r}")
    n = len(values)
    if rng.uniform() < schedule.epsilon(agent_step):
        return int(rng.integers(0, n))
    tau = schedule.temperature(agent_step)
    z = (values - values.max()) / tau
    probs = np.exp(z)
    probs /= probs.sum()
    return int(rng.choice(n, p=probs))


class LearnedQPolicy(BranchingRule):
    """Greedy branching on decoded Q-values; usable anywhere the engine
    takes a branching rule."""

    name = "learned_q"

    def __init__(self, qfn: QFunction, label: str | None = None):
        self.qfn = qfn
        if label:
            self.name = label

    def select(self, tree, node_id, candidates, ctx):
        matrix = featurize(tree, node_id, candidates, ctx.stats)
        values = self.qfn.values(matrix)
        return candidates[int(np.argmax(values))]


@dataclass
class TrainConfig:
    preset: str = "small-set_cover"
    seed: int = 0
    max_gradient_steps: int = 20_000

    # Q-learning block
    batch_size: int = 128
    learning_rate: float = 5e-5
    gamma: float = 1.0
    k: int = 3
    steps_per_update: int = 10
    tau_net: float = 1e-4
    loss: str = LOSS_HL_GAUSS_CE
    target_style: str = STYLE_BBMDP
    reward_per_transition: float = -1.0
    grad_clip_norm: float = 10.0

    # approximator
    qfn_kind: str = "mlp"
    hidden: tuple[int, ...] = (64, 64)

    # replay block
    buffer_capacity: int = 100_000
    buffer_min_fill: int = 20_000
    per_alpha: float = 0.6
    per_beta_init: float = 0.4
    per_beta_final: float = 1.0
    per_beta_steps: int = 100_000
    min_priority: float = 1e-3

    # exploration block
    schedule: ExplorationSchedule = field(default_factory=ExplorationSchedule)

    # codec block
    codec: HistogramCodec = field(default_factory=HistogramCodec)

    # episode control and validation
    max_episode_steps: int = 1200
    val_instances: int = 10
    val_every: int = 1000
    val_seed_base: int = 10_000
    train_seed_lo: int = 100_000
    train_seed_hi: int = 2**31 - 1

    def to_json_dict(self) -> dict:
        doc = asdict(self)
        doc["hidden"] = list(self.hidden)
        doc["schedule"] = asdict(self.schedule)
        doc["codec"] = self.codec.to_json_dict()
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        if "schedule" in doc:
            doc["schedule"] = ExplorationSchedule(**doc["schedule"])
        if "codec" in doc:
            doc["codec"] = HistogramCodec.from_json_dict(doc["codec"])
        if "hidden" in doc:
            doc["hidden"] = tuple(doc["hidden"])
        return cls(**doc)


@dataclass
class TrainResult:
    qfn: QFunction            # parameters of the best validation geomean
    final_qfn: QFunction      # parameters at the last gradient step
    target_qfn: QFunction
    curves: list[dict]
    best_val: float
    best_val_step: int
    episodes: int
    agent_steps: int
    gradient_steps: int
    config: TrainConfig


def _validation_geomean(qfn: QFunction, config: TrainConfig) -> float:
    policy = LearnedQPolicy(qfn)
    sizes = []
    for i in range(config.val_instances):
        spec = preset_with_seed(config.preset, config.val_seed_base + i)
        rep = eng.solve(generate(spec), policy, NodeSelection(), seed=0,
                        max_nodes=50_000)
        sizes.append(rep.node_count)
    return float(np.exp(np.mean(np.log(sizes))))


def train(config: TrainConfig, checkpoint_path: str | None = None,
          progress: bool = False) -> TrainResult:
    codec = config.codec if config.loss == LOSS_HL_GAUSS_CE else None
    seeds = np.random.SeedSequence(config.seed).spawn(4)
    init_seed = int(seeds[0].generate_state(1)[0])
    explore_rng = np.random.default_rng(seeds[1])
    instance_rng = np.random.default_rng(seeds[2])
    buffer_rng = np.random.default_rng(seeds[3])

    qfn = QFunction(config.qfn_kind, NUM_FEATURES, codec, config.hidden, seed=init_seed)
    target_qfn = qfn.clone()
    adam = Adam(qfn.num_params, lr=config.learning_rate)
    buffer = ReplayBuffer(
        capacity=config.buffer_capacity,
        min_fill=config.buffer_min_fill,
        alpha=config.per_alpha,
        beta_init=config.per_beta_init,
        beta_final=config.per_beta_final,
        beta_steps=config.per_beta_steps,
        min_priority=config.min_priority,
    )
    target_cfg = TargetConfig(k=config.k,
                              reward_per_transition=config.reward_per_transition,
                              loss=config.loss)
    env_cfg = EnvConfig(reward_per_transition=config.reward_per_transition,
                        selection=NodeSelection(),
                        max_steps=config.max_episode_steps)

    agent_step = 0
    grad_step = 0
    episodes = 0
    recent_losses: list[float] = []
    curves: list[dict] = []
    best = {"val": math.inf, "step": 0, "theta": qfn.get_theta()}

    def learner_tick():
        nonlocal grad_step
        batch, weights, idx = buffer.sample(config.batch_size, buffer_rng, grad_step)
        targets = batch_transition_targets(batch, qfn, target_qfn)
        x = np.stack([t.features[t.action_row] for t in batch])
        preds = qfn.values(x)
        loss_value, grad = loss_and_gradient(qfn, x, targets, weights, config.loss)
        if math.isnan(loss_value) or math.isinf(loss_value):
            if checkpoint_path:
                save_checkpoint(checkpoint_path, qfn, config.to_json_dict(), grad_step)
            raise TrainingError(f"non-finite loss {loss_value} at gradient step {grad_step}")
        grad = clip_gradient(grad, config.grad_clip_norm)
        qfn.set_theta(adam.step(qfn.get_theta(), grad))
        soft_update(target_qfn, qfn, config.tau_net)
        buffer.update_priorities(idx, preds - targets)
        recent_losses.append(loss_value)
        if len(recent_losses) > 200:
            del recent_losses[:100]
        grad_step += 1
        if config.val_instances and (grad_step % config.val_every == 0
                                     or grad_step == config.max_gradient_steps):
            val = _validation_geomean(qfn, config)
            if val < best["val"]:
                best["val"] = val
                best["step"] = grad_step
                best["theta"] = qfn.get_theta()
            curves.append({
                "gradient_step": grad_step,
                "agent_step": agent_step,
                "episodes": episodes,
                "loss": float(np.mean(recent_losses[-100:])),
                "val_geomean_nodes": val,
            })
            if progress:
                print(f"[train] grad={grad_step} agent={agent_step} "
                      f"eps={episodes} loss={curves[-1]['loss']:.4f} val={val:.1f}",
                      flush=True)

    while grad_step < config.max_gradient_steps:
        inst_seed = int(instance_rng.integers(config.train_seed_lo, config.train_seed_hi))
        instance = generate(preset_with_seed(config.preset, inst_seed))
        env = BranchingEnv(instance, env_cfg)
        _, done = env.reset()
        truncated = False
        while not done:
            if len(env.transitions) >= config.max_episode_steps:
                truncated = True
                break
            capture = env.captures[env.focus]
            row = act(qfn, capture.matrix, config.schedule, agent_step, explore_rng)
            _, _, done = env.step(capture.candidates[row])
            agent_step += 1
            if agent_step % config.steps_per_update == 0 and buffer.ready \
                    and grad_step < config.max_gradient_steps:
                learner_tick()
        episodes += 1
        episode = env.finish(truncated)
        if not truncated:
            for record in subtree_records(episode):
                buffer.add(build_transition(record, target_cfg, config.target_style))

    final_qfn = qfn.clone()
    if math.isfinite(best["val"]):
        best_qfn = qfn.clone()
        best_qfn.set_theta(best["theta"])
    else:
        best_qfn = final_qfn
    if checkpoint_path:
        save_checkpoint(checkpoint_path, best_qfn, config.to_json_dict(), best["step"])
    return TrainResult(
        qfn=best_qfn,
        final_qfn=final_qfn,
        target_qfn=target_qfn,
        curves=curves,
        best_val=best["val"],
        best_val_step=best["step"],
        episodes=episodes,
        agent_steps=agent_step,
        gradient_steps=grad_step,
        config=config,
    )
