"""Asynchronous prioritized actor-learner runtime on one machine.

Actors step their own environments with a periodically refreshed policy
snapshot and push transitions into sharded replay. Learners sample, compute
critic gradients on a local replica and hand them to SharedMemory, which
applies them one at a time to the master agent, runs any due actor update on
the master and publishes a new immutable parameter snapshot.
"""

import hashlib
import logging
import threading
import time
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Optional

import numpy as np

from slicebench.core.algorithms.agent_base import ActorCriticAgent, ActorGradients, CriticGradients
from slicebench.core.algorithms.replay import ShardedReplay, Transition
from slicebench.core.domain.enums import AgentKind
from slicebench.core.domain.exceptions import InsufficientDataError
from slicebench.core.domain.settings import ExperimentConfig
from slicebench.core.services.slicing_env import SlicingEnv
from slicebench.core.services.trainer import (
    EpisodeTracker,
    RunResult,
    _update_record,
    beta_schedule,
    evaluate,
    make_agent,
    make_replay,
)
from slicebench.data.models import UpdateRecord
from slicebench.data.repositories.checkpoint_repository import CheckpointRepository
from slicebench.data.repositories.metrics_repository import RunRepository
from slicebench.utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

POLL_SECONDS = 0.005


def _checksum(params: Mapping[str, np.ndarray], version: int) -> str:
    digest = hashlib.blake2b(digest_size=16)
    digest.update(str(version).encode())
    for name in sorted(params):
        digest.update(name.encode())
        digest.update(params[name].tobytes())
    return digest.hexdigest()


@dataclass(frozen=True)
class ParameterSnapshot:
    """Immutable versioned copy of every network's parameters."""

    version: int
    params: Mapping[str, np.ndarray]
    checksum: str

    @classmethod
    def of(cls, agent: ActorCriticAgent, version: int) -> "ParameterSnapshot":
        params = agent.snapshot()
        for array in params.values():
            array.setflags(write=False)
        return cls(version, MappingProxyType(params), _checksum(params, version))

    def verify(self) -> bool:
        return _checksum(self.params, self.version) == self.checksum


class SharedMemory:
    """Master parameters plus the latest published snapshot.

    Gradient application is serialized by a lock; readers never take it and
    always see one complete snapshot because publication is a single
    reference swap.
    """

    def __init__(self, master: ActorCriticAgent):
        self.master = master
        self._lock = threading.Lock()
        self._snapshot = ParameterSnapshot.of(master, 0)

    @property
    def version(self) -> int:
        return self._snapshot.version

    def read(self) -> ParameterSnapshot:
        return self._snapshot

    def apply(
        self, critic: CriticGradients, states: Optional[np.ndarray] = None
    ) -> tuple[int, Optional[ActorGradients]]:
        """Apply one learner's critic gradients and publish the result.

        When a delayed actor update is due, the actor gradients are taken on
        the master after the critic step has landed.

        Args:
            critic: Critic gradients computed on a replica
            states: States of the same batch; without them no actor update happens

        Returns:
            (new version, the applied actor gradients or None)
        """
        with self._lock:
            actor = None
            if self.master.apply_critic(critic) and states is not None:
                actor = self.master.actor_gradients(states)
                self.master.apply_actor(actor)
                self.master.soft_update()
            self._snapshot = ParameterSnapshot.of(self.master, self._snapshot.version + 1)
            return self._snapshot.version, actor

    def checkpoint(self, repo: CheckpointRepository, tag: str, config_hash: str) -> None:
        with self._lock:
            repo.save(self.master, tag, config_hash)


class StepBudget:
    """Thread-safe global step counter."""

    def __init__(self, total: int):
        self.total = total
        self._claimed = 0
        self._lock = threading.Lock()

    def claim(self) -> Optional[int]:
        """Next global step index, or None once the budget is spent."""
        with self._lock:
            if self._claimed >= self.total:
                return None
            t = self._claimed
            self._claimed += 1
            return t

    @property
    def claimed(self) -> int:
        return self._claimed


class _Lockstep:
    """One-for-one handoff between a single actor and a single learner."""

    def __init__(self):
        self.to_learner = threading.Semaphore(0)
        self.to_actor = threading.Semaphore(0)


class AsyncRun:
    """Threads and shared state of one asynchronous training run."""

    def __init__(
        self,
        config: ExperimentConfig,
        agent_kind: AgentKind,
        store: Optional[RunRepository] = None,
        checkpoints: Optional[CheckpointRepository] = None,
    ):
        self.config = config
        self.rt = config.runtime
        self.kind = AgentKind(agent_kind)
        self.store = store
        self.checkpoints = checkpoints
        self.seed = self.rt.seed
        self.config_hash = config.config_hash()

        probe = SlicingEnv(config)
        self.obs_dim = probe.observation_space.shape[0]
        self.action_dim = probe.action_space.shape[0]
        self.n_slices = probe.n_slices
        self.master = make_agent(self.kind, self.obs_dim, self.action_dim, config, self.seed)
        self.memory = SharedMemory(self.master)
        self.replay = ShardedReplay(
            [make_replay(self.kind, config, self.seed, f"shard{i}") for i in range(self.rt.n_buffers)],
            make_rng(self.seed, "replay", "router"),
            self.rt.buffer_assignment,
        )
        self.budget = StepBudget(self.rt.total_timesteps)
        self.beta = beta_schedule(config)
        self.stop = threading.Event()
        self.lockstep = _Lockstep() if self.rt.lockstep else None
        self.result = RunResult()
        self._result_lock = threading.Lock()
        self._pending: list[UpdateRecord] = []
        self._errors: list[BaseException] = []

    def _replica(self, label: str) -> ActorCriticAgent:
        replica = make_agent(self.kind, self.obs_dim, self.action_dim, self.config, self.seed, label)
        replica.restore(self.memory.read().params)
        return replica

    def _guarded(self, target, *args):
        def run():
            try:
                target(*args)
            except BaseException as e:  # surfaced by run()
                logger.exception(f"{threading.current_thread().name} failed: {e}")
                self._errors.append(e)
                self.stop.set()
                if self.lockstep:
                    self.lockstep.to_actor.release()
                    self.lockstep.to_learner.release()

        return run

    def _actor(self, actor_id: int) -> None:
        env = SlicingEnv(self.config)
        agent = self._replica(f"actor{actor_id}")
        obs, _ = env.reset(seed=derive_seed(self.seed, "env", "actor", actor_id))
        agent.reset_noise()
        tracker = EpisodeTracker(env.n_slices)
        local_steps = 0
        episodes = 0

        while not self.stop.is_set():
            t = self.budget.claim()
            if t is None:
                break
            if local_steps % self.rt.snapshot_refresh == 0:
                agent.restore({"actor": self.memory.read().params["actor"]})
            if t < agent.start_timesteps:
                action = agent.random_action()
            else:
                action = agent.select_action(obs, explore=True)
            next_obs, reward, terminated, truncated, info = env.step(action)
            self.replay.push(Transition(obs, action, reward, next_obs, terminated))
            tracker.add(reward, info)
            obs = next_obs
            local_steps += 1

            if self.lockstep:
                self.lockstep.to_learner.release()
                self.lockstep.to_actor.acquire()

            if terminated or truncated:
                episodes += 1
                if self.store:
                    self.store.metrics.create(tracker.metrics(t + 1, episodes, actor_id))
                    self.store.timing.create(tracker.timing(t + 1, episodes))
                with self._result_lock:
                    self.result.episodes += 1
                obs, _ = env.reset()
                agent.reset_noise()
                tracker.reset()
        logger.debug(f"Actor {actor_id} finished after {local_steps} steps")

    def _learn_once(self, replica: ActorCriticAgent, learner_id: int, seen: list[int]) -> bool:
        snapshot = self.memory.read()
        if snapshot.version != seen[0]:
            replica.restore(snapshot.params)
            if _checksum(replica.snapshot(), snapshot.version) != snapshot.checksum:
                logger.warning(
                    f"Learner {learner_id} replica disagrees with version {snapshot.version}"
                )
                with self._result_lock:
                    self.result.torn_snapshots += 1
            seen[0] = snapshot.version

        t = self.budget.claimed
        if t < replica.start_timesteps:
            return False
        try:
            batch = self.replay.sample(replica.batch_size, self.beta.value(t))
        except InsufficientDataError:
            return False
        critic = replica.critic_gradients(batch)
        version, actor = self.memory.apply(critic, batch.states)
        self.replay.reprioritize(batch, critic.losses)

        diag = dict(critic.diagnostics, critic_loss=critic.loss)
        if actor is not None:
            diag["actor_q"] = actor.q_mean
        record = _update_record(diag, version, t, learner_id)
        with self._result_lock:
            self.result.updates += 1
            self.result.losses.append(critic.loss)
            self._pending.append(record)
        return True

    def _learner(self, learner_id: int) -> None:
        replica = self._replica(f"learner{learner_id}")
        seen = [self.memory.version]
        while True:
            if self.lockstep:
                # one update per pushed transition
                self.lockstep.to_learner.acquire()
                if self.stop.is_set():
                    break
                self._learn_once(replica, learner_id, seen)
                self.lockstep.to_actor.release()
                continue
            if self.stop.is_set():
                break
            if not self._learn_once(replica, learner_id, seen):
                self.stop.wait(POLL_SECONDS)

    def _flush_updates(self) -> None:
        with self._result_lock:
            pending, self._pending = self._pending, []
        if self.store and pending:
            self.store.updates.create_many(sorted(pending, key=lambda r: r.update))

    def _evaluation_point(self, t: int, eval_env: SlicingEnv) -> None:
        snapshot = self.memory.read()
        evaluator = make_agent(self.kind, self.obs_dim, self.action_dim, self.config, self.seed, "eval")
        evaluator.restore({"actor": snapshot.params["actor"]})
        record = evaluate(
            lambda obs: evaluator.select_action(obs, explore=False),
            eval_env,
            self.rt.eval_episodes,
            self.rt.eval_top_k,
            self.seed,
            t,
        )
        self.result.evaluations.append(record)
        if self.store:
            self.store.evaluations.create(record)
        if self.checkpoints and self.rt.checkpoint_at_eval:
            self.memory.checkpoint(self.checkpoints, f"t{t:09d}", self.config_hash)

    def run(self) -> RunResult:
        """Start the threads, evaluate on schedule from this thread and join."""
        started = time.perf_counter()
        total = self.rt.total_timesteps
        if total == 0:
            logger.info("Zero timestep budget; nothing to train")
            return self.result
        eval_env = SlicingEnv(self.config)
        logger.info(
            f"Async training {self.master.describe()}: {self.rt.n_actors} actors, "
            f"{self.rt.n_buffers} buffers, {self.rt.n_learners} learners, {total} steps"
        )

        actors = [
            threading.Thread(target=self._guarded(self._actor, i), name=f"actor-{i}", daemon=True)
            for i in range(self.rt.n_actors)
        ]
        learners = [
            threading.Thread(target=self._guarded(self._learner, i), name=f"learner-{i}", daemon=True)
            for i in range(self.rt.n_learners)
        ]
        self._evaluation_point(0, eval_env)
        next_eval = self.rt.eval_interval
        for thread in learners + actors:
            thread.start()

        while True:
            alive = any(a.is_alive() for a in actors)
            while self.budget.claimed >= next_eval and next_eval < total:
                self._evaluation_point(next_eval, eval_env)
                self._flush_updates()
                next_eval += self.rt.eval_interval
            if not alive:
                break
            time.sleep(POLL_SECONDS)
        for actor in actors:
            actor.join()

        self.stop.set()
        if self.lockstep:
            self.lockstep.to_learner.release()
        for learner in learners:
            learner.join()
        if self._errors:
            raise self._errors[0]

        self._flush_updates()
        self._evaluation_point(total, eval_env)
        self.result.steps = self.budget.claimed
        self.result.pushed = self.replay.pushed
        self.result.stale_updates = self.replay.stale_updates
        self.result.wall_seconds = time.perf_counter() - started
        logger.info(
            f"Async run finished: {self.result.episodes} episodes, {self.result.updates} updates, "
            f"{self.result.pushed} transitions, {self.result.torn_snapshots} torn snapshots"
        )
        return self.result


def run_async(
    config: ExperimentConfig,
    agent_kind: AgentKind,
    store: Optional[RunRepository] = None,
    checkpoints: Optional[CheckpointRepository] = None,
) -> RunResult:
    """Train with concurrent actors and learners; see AsyncRun."""
    return AsyncRun(config, agent_kind, store, checkpoints).run()
