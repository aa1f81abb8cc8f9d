"""Synchronous training loop, evaluation protocol and agent/replay factories."""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from slicebench.core.algorithms.agent_base import ActorCriticAgent
from slicebench.core.algorithms.baselines import DdpgAgent, Td3Agent
from slicebench.core.algorithms.dtd3 import DistributionalTd3Agent
from slicebench.core.algorithms.replay import (
    LinearSchedule,
    PrioritizedReplayBuffer,
    Transition,
    UniformReplayBuffer,
)
from slicebench.core.domain.enums import AgentKind
from slicebench.core.domain.settings import ExperimentConfig
from slicebench.core.services.slicing_env import SlicingEnv
from slicebench.data.models import EvaluationRecord, MetricsRecord, TimingRecord, UpdateRecord
from slicebench.data.repositories.checkpoint_repository import CheckpointRepository
from slicebench.data.repositories.metrics_repository import RunRepository
from slicebench.utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

EnvFactory = Callable[[], SlicingEnv]
Policy = Callable[[np.ndarray], np.ndarray]


def agent_settings(config: ExperimentConfig, kind: AgentKind):
    return {AgentKind.DTD3: config.dtd3, AgentKind.TD3: config.td3, AgentKind.DDPG: config.ddpg}[
        AgentKind(kind)
    ]


def make_agent(
    kind: AgentKind,
    obs_dim: int,
    action_dim: int,
    config: ExperimentConfig,
    seed: int,
    label: str = "",
) -> ActorCriticAgent:
    """Build an agent of the requested kind from its config section."""
    kind = AgentKind(kind)
    classes = {
        AgentKind.DTD3: DistributionalTd3Agent,
        AgentKind.TD3: Td3Agent,
        AgentKind.DDPG: DdpgAgent,
    }
    return classes[kind](obs_dim, action_dim, agent_settings(config, kind), seed, label)


def make_replay(kind: AgentKind, config: ExperimentConfig, seed: int, label: str = ""):
    """Prioritized replay for D-TD3, uniform replay for the baselines."""
    rng = make_rng(seed, "replay", label)
    if AgentKind(kind) is AgentKind.DTD3:
        r = config.replay
        return PrioritizedReplayBuffer(r.capacity, rng, r.alpha, r.priority_floor, r.priority_transform)
    return UniformReplayBuffer(config.replay.capacity, rng)


def beta_schedule(config: ExperimentConfig) -> LinearSchedule:
    r = config.replay
    return LinearSchedule(r.beta_start, r.beta_end, config.runtime.total_timesteps)


def best_k_mean(returns: list[float], k: int) -> float:
    """Mean of the k largest episode returns."""
    if not returns:
        raise ValueError("no episode returns to score")
    top = sorted(returns, reverse=True)[: max(1, min(k, len(returns)))]
    return float(np.mean(top))


class EpisodeTracker:
    """Accumulates per-step info into one episode summary."""

    def __init__(self, n_slices: int):
        self.n_slices = n_slices
        self.reset()

    def reset(self) -> None:
        self.steps = 0
        self.episode_return = 0.0
        self.started = time.perf_counter()
        self._sums: dict[str, float] = {}
        self._slices: dict[str, np.ndarray] = {}

    def add(self, reward: float, info: dict) -> None:
        self.steps += 1
        self.episode_return += reward
        for key in ("objective", "compute", "energy", "delay", "admission_rate", "violating_users"):
            self._sums[key] = self._sums.get(key, 0.0) + float(info[key])
        for key in ("slice_admission_rate", "slice_latency", "slice_cpu_utilization", "slice_energy"):
            self._slices[key] = self._slices.get(key, np.zeros(self.n_slices)) + info[key]

    def mean(self, key: str) -> float:
        return self._sums.get(key, 0.0) / max(self.steps, 1)

    def slice_mean(self, key: str) -> list[float]:
        return [float(v) for v in self._slices.get(key, np.zeros(self.n_slices)) / max(self.steps, 1)]

    def elapsed_ms(self) -> float:
        return (time.perf_counter() - self.started) * 1000.0

    def metrics(self, timestep: int, episode: int, actor: int = 0) -> MetricsRecord:
        return MetricsRecord(
            timestep=timestep,
            episode=episode,
            actor=actor,
            episode_return=self.episode_return,
            objective=self.mean("objective"),
            compute=self.mean("compute"),
            energy=self.mean("energy"),
            delay=self.mean("delay"),
            admission_rate=self.mean("admission_rate"),
            violating_users=self.mean("violating_users"),
            slice_admission_rate=self.slice_mean("slice_admission_rate"),
            slice_latency=self.slice_mean("slice_latency"),
            slice_cpu_utilization=self.slice_mean("slice_cpu_utilization"),
            slice_energy=self.slice_mean("slice_energy"),
        )

    def timing(self, timestep: int, episode: int) -> TimingRecord:
        elapsed = self.elapsed_ms()
        return TimingRecord(
            timestep=timestep,
            episode=episode,
            episode_ms=elapsed,
            ms_per_1000_steps=elapsed / max(self.steps, 1) * 1000.0,
        )


def evaluate(
    policy: Policy,
    env: SlicingEnv,
    episodes: int,
    top_k: int,
    seed: int,
    timestep: int = 0,
) -> EvaluationRecord:
    """Score a policy by the mean of its best top_k noiseless episode returns.

    Episode seeds derive from the run seed, so a deterministic policy always
    gets the same score.

    Args:
        policy: Maps an observation to a normalized action
        env: Evaluation environment
        episodes: Episodes to run
        top_k: Best episodes averaged into the score
        seed: Run seed
        timestep: Training step being evaluated

    Returns:
        Evaluation record with per-slice KPIs averaged over all episodes
    """
    returns = []
    trackers = []
    for k in range(episodes):
        obs, _ = env.reset(seed=derive_seed(seed, "eval", k))
        tracker = EpisodeTracker(env.n_slices)
        done = False
        while not done:
            obs, reward, terminated, truncated, info = env.step(policy(obs))
            tracker.add(reward, info)
            done = terminated or truncated
        returns.append(tracker.episode_return)
        trackers.append(tracker)

    def across(key: str) -> float:
        return float(np.mean([t.mean(key) for t in trackers]))

    def across_slices(key: str) -> list[float]:
        return [float(v) for v in np.mean([t.slice_mean(key) for t in trackers], axis=0)]

    latency = across_slices("slice_latency")
    utilization = across_slices("slice_cpu_utilization")
    energy = across_slices("slice_energy")
    record = EvaluationRecord(
        timestep=timestep,
        score=best_k_mean(returns, top_k),
        mean_return=float(np.mean(returns)),
        returns=returns,
        admission_rate=across("admission_rate"),
        latency=float(np.mean(latency)),
        cpu_utilization=float(np.mean(utilization)),
        energy=float(np.sum(energy)),
        slice_admission_rate=across_slices("slice_admission_rate"),
        slice_latency=latency,
        slice_cpu_utilization=utilization,
        slice_energy=energy,
    )
    logger.info(f"Evaluation at t={timestep}: score {record.score:.5f} over {episodes} episodes")
    return record


def agent_policy(agent: ActorCriticAgent) -> Policy:
    return lambda obs: agent.select_action(obs, explore=False)


@dataclass
class RunResult:
    """Summary of a finished training run."""

    evaluations: list[EvaluationRecord] = field(default_factory=list)
    episodes: int = 0
    steps: int = 0
    updates: int = 0
    pushed: int = 0
    wall_seconds: float = 0.0
    stale_updates: int = 0
    torn_snapshots: int = 0
    losses: list[float] = field(default_factory=list)

    @property
    def final_score(self) -> Optional[float]:
        return self.evaluations[-1].score if self.evaluations else None


def _update_record(diag: dict, update: int, timestep: int, learner: int = 0) -> UpdateRecord:
    return UpdateRecord(
        update=update,
        timestep=timestep,
        learner=learner,
        critic_loss=diag["critic_loss"],
        q_mean=diag["q_mean"],
        target_gap_max=diag.get("target_gap_max"),
        actor_q=diag.get("actor_q"),
    )


def run_sync(
    config: ExperimentConfig,
    agent_kind: AgentKind,
    store: Optional[RunRepository] = None,
    checkpoints: Optional[CheckpointRepository] = None,
    agent: Optional[ActorCriticAgent] = None,
) -> RunResult:
    """Single-threaded reference training loop.

    Args:
        config: Validated experiment configuration
        agent_kind: Agent to train
        store: Where metrics are written (nothing is written when None)
        checkpoints: Where checkpoints are written at evaluation points
        agent: Pre-built agent, mainly for tests

    Returns:
        Run summary
    """
    rt = config.runtime
    seed = rt.seed
    total = rt.total_timesteps
    result = RunResult()
    started = time.perf_counter()
    if total == 0:
        logger.info("Zero timestep budget; nothing to train")
        return result

    env = SlicingEnv(config)
    eval_env = SlicingEnv(config)
    obs_dim = env.observation_space.shape[0]
    action_dim = env.action_space.shape[0]
    agent = agent or make_agent(agent_kind, obs_dim, action_dim, config, seed)
    buffer = make_replay(agent_kind, config, seed)
    beta = beta_schedule(config)
    policy = agent_policy(agent)
    config_hash = config.config_hash()

    def evaluation_point(t: int) -> None:
        record = evaluate(policy, eval_env, rt.eval_episodes, rt.eval_top_k, seed, t)
        result.evaluations.append(record)
        if store:
            store.evaluations.create(record)
        if checkpoints and rt.checkpoint_at_eval:
            checkpoints.save(agent, f"t{t:09d}", config_hash)

    logger.info(f"Sync training {agent.describe()} for {total} steps (seed {seed})")
    obs, _ = env.reset(seed=derive_seed(seed, "env", "train"))
    agent.reset_noise()
    tracker = EpisodeTracker(env.n_slices)
    pending_updates: list[UpdateRecord] = []

    for t in range(total):
        if t % rt.eval_interval == 0:
            evaluation_point(t)

        if t < agent.start_timesteps:
            action = agent.random_action()
        else:
            action = agent.select_action(obs, explore=True)
        next_obs, reward, terminated, truncated, info = env.step(action)
        buffer.push(Transition(obs, action, reward, next_obs, terminated))
        tracker.add(reward, info)
        obs = next_obs

        if t >= agent.start_timesteps and len(buffer) >= agent.batch_size:
            diag = agent.train_step(buffer, beta.value(t))
            result.updates += 1
            result.losses.append(diag["critic_loss"])
            pending_updates.append(_update_record(diag, result.updates, t))

        if terminated or truncated:
            result.episodes += 1
            if store:
                store.metrics.create(tracker.metrics(t + 1, result.episodes))
                store.timing.create(tracker.timing(t + 1, result.episodes))
                store.updates.create_many(pending_updates)
            pending_updates = []
            obs, _ = env.reset()
            agent.reset_noise()
            tracker.reset()

    if store and pending_updates:
        store.updates.create_many(pending_updates)
    evaluation_point(total)

    result.steps = total
    result.pushed = buffer.pushed
    result.stale_updates = getattr(buffer, "stale_updates", 0)
    result.wall_seconds = time.perf_counter() - started
    logger.info(
        f"Sync run finished: {result.episodes} episodes, {result.updates} updates, "
        f"final score {result.final_score:.5f}"
    )
    return result
