"""Epsilon-greedy episode generation and the Q-learning training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from treerl.featurizer import GridFeaturizer
from treerl.geometry import DEFAULT_MIN_SIZE, NUM_ACTIONS, SCALING_IDS
from treerl.mdp import HISTORY_LEN, SceneContext, Transition, initial_flags, initial_state, step
from treerl.qnet import QNetwork, TrainingDiverged, UpdateConfig, default_dims, update_batch
from treerl.replay import ReplayMemory
from treerl.scene import Scene

log = logging.getLogger(__name__)

N_SCALING = len(SCALING_IDS)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    max_steps: int = 50
    eps_start: float = 1.0
    eps_end: float = 0.1
    anneal_epochs: int = 10
    gamma: float = 0.9
    batch_size: int = 64
    replay_capacity: int = 100_000
    learning_rate: float = 1e-2
    td_clip: float = 5.0
    hidden: tuple[int, ...] = (256, 128)
    grid: int = 8
    min_size: float = DEFAULT_MIN_SIZE
    updates_per_episode: int | None = 4
    target_sync: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 1 <= self.max_steps <= HISTORY_LEN:
            raise ValueError(f"max_steps must lie in [1, {HISTORY_LEN}]")
        if not self.eps_start >= self.eps_end > 0:
            raise ValueError("need eps_start >= eps_end > 0")
        if self.anneal_epochs < 0 or (self.epochs and self.anneal_epochs > self.epochs):
            raise ValueError("anneal_epochs must lie in [0, epochs]")
        if self.batch_size < 1 or self.replay_capacity < 1:
            raise ValueError("batch_size and replay_capacity must be >= 1")
        if self.updates_per_episode is not None and self.updates_per_episode < 0:
            raise ValueError("updates_per_episode must be >= 0")
        if self.target_sync < 0:
            raise ValueError("target_sync must be >= 0")
        UpdateConfig(self.learning_rate, self.gamma, self.td_clip)

    @property
    def update_config(self) -> UpdateConfig:
        return UpdateConfig(self.learning_rate, self.gamma, self.td_clip)

    @property
    def n_updates(self) -> int:
        if self.updates_per_episode is not None:
            return self.updates_per_episode
        return math.ceil(self.max_steps / self.batch_size)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def epsilon_at(global_step: int, steps_per_anneal_phase: int, cfg: TrainConfig) -> float:
    """Linear from ``eps_start`` at step 0 to ``eps_end`` at the end of the anneal phase."""
    if global_step >= steps_per_anneal_phase:
        return cfg.eps_end
    frac = global_step / steps_per_anneal_phase
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


def group_argmax(q_values: np.ndarray) -> tuple[int, int]:
    """Best scaling id and best translation id; ties go to the lowest id."""
    q = np.asarray(q_values)
    return int(np.argmax(q[:N_SCALING])), N_SCALING + int(np.argmax(q[N_SCALING:]))


def select_training_action(q_values: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Explore uniformly over all actions with probability ``eps``, otherwise pick
    one of the two group-best actions at random."""
    if rng.random() < eps:
        return int(rng.integers(NUM_ACTIONS))
    return group_argmax(q_values)[int(rng.integers(2))]


@dataclass
class EpisodeStats:
    steps: int
    total_reward: float
    hits: int


def run_episode(
    ctx: SceneContext,
    net: QNetwork,
    eps: float | Callable[[int], float],
    mem: ReplayMemory,
    rng: np.random.Generator,
    max_steps: int = HISTORY_LEN,
) -> EpisodeStats:
    """Run one fixed-horizon episode from the whole image, pushing every transition.

    ``eps`` may be a callable of the step index within the episode so the
    caller can anneal per global step.
    """
    state = initial_state(ctx)
    flags = initial_flags(ctx.scene.objects, state.window)
    total = 0.0
    for t in range(max_steps):
        e = eps(t) if callable(eps) else eps
        action = select_training_action(net.forward(state.input_vector()), e, rng)
        nxt, r, flags, terminal = step(state, action, ctx, flags, max_steps)
        mem.push(Transition(state, action, r, nxt, terminal))
        total += r
        state = nxt
    return EpisodeStats(max_steps, total, sum(1 for f in flags if f == 1))


@dataclass
class EpochLog:
    epoch: int
    epsilon: float
    mean_reward: float
    mean_loss: float
    episodes: int

    def to_line(self) -> str:
        return f"{self.epoch}\t{self.epsilon:.6f}\t{self.mean_reward:.6f}\t{self.mean_loss:.6f}\t{self.episodes}"


@dataclass
class TrainResult:
    net: QNetwork
    log: list[EpochLog] = field(default_factory=list)


def train(
    dataset: Sequence[Scene],
    cfg: TrainConfig,
    on_epoch: Callable[[EpochLog, QNetwork], None] | None = None,
) -> TrainResult:
    """Train a Q-network with one episode per scene per epoch.

    After each episode, ``cfg.n_updates`` minibatch updates run once the
    replay memory holds at least ``cfg.batch_size`` transitions.
    """
    if not dataset:
        raise ValueError("training needs a non-empty dataset")
    featurizer = GridFeaturizer(cfg.grid)
    init_rng, order_rng, behavior_rng, replay_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(4)
    )
    net = QNetwork.create(default_dims(featurizer.dim, cfg.hidden), init_rng)
    result = TrainResult(net)
    if cfg.epochs == 0:
        return result

    contexts = [SceneContext(s, featurizer, cfg.min_size) for s in dataset]
    mem = ReplayMemory(cfg.replay_capacity, replay_rng)
    update_cfg = cfg.update_config
    target = net.copy() if cfg.target_sync else None
    anneal_steps = cfg.anneal_epochs * len(dataset) * cfg.max_steps
    global_step = 0
    n_updates = 0

    for epoch in range(1, cfg.epochs + 1):
        rewards, losses = [], []
        for idx in order_rng.permutation(len(contexts)):
            base = global_step
            stats = run_episode(
                contexts[idx],
                net,
                lambda t: epsilon_at(base + t, anneal_steps, cfg),
                mem,
                behavior_rng,
                cfg.max_steps,
            )
            global_step += stats.steps
            rewards.append(stats.total_reward)
            if len(mem) < cfg.batch_size:
                continue
            for _ in range(cfg.n_updates):
                try:
                    losses.append(update_batch(net, mem.sample(cfg.batch_size), update_cfg, target))
                except TrainingDiverged as exc:
                    raise TrainingDiverged(f"epoch {epoch}, update {n_updates}: {exc}") from None
                n_updates += 1
                if target is not None and n_updates % cfg.target_sync == 0:
                    target = net.copy()
        entry = EpochLog(
            epoch=epoch,
            epsilon=epsilon_at(global_step, anneal_steps, cfg),
            mean_reward=float(np.mean(rewards)),
            mean_loss=float(np.mean(losses)) if losses else float("nan"),
            episodes=len(rewards),
        )
        result.log.append(entry)
        log.info("epoch %s", entry.to_line())
        if on_epoch is not None:
            on_epoch(entry, net)
    return result
