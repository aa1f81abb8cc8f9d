"""Shared deterministic actor-critic machinery for the learning agents."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from slicebench.core.algorithms import nn
from slicebench.core.algorithms.nn import AdamState, Mlp
from slicebench.core.algorithms.replay import SampledBatch
from slicebench.core.domain.enums import Activation
from slicebench.core.domain.exceptions import InvariantViolationError, ShapeMismatchError
from slicebench.utils.seeding import make_rng

logger = logging.getLogger(__name__)

MIN_ACTION = -1.0
MAX_ACTION = 1.0


@dataclass
class CriticGradients:
    """Critic gradients computed on one batch, ready to be applied."""

    grads: list[list[np.ndarray]]
    losses: np.ndarray
    loss: float
    diagnostics: dict[str, float] = field(default_factory=dict)


@dataclass
class ActorGradients:
    """Deterministic policy gradient for the actor."""

    grads: list[np.ndarray]
    q_mean: float


def smoothed_target_action(
    target_actions: np.ndarray, rng: np.random.Generator, noise_std: float, noise_clip: float
) -> np.ndarray:
    """Target action plus clipped Gaussian noise, clipped to the action box.

    Args:
        target_actions: pi'(s') rows
        rng: Noise generator
        noise_std: Smoothing noise std
        noise_clip: Absolute noise bound

    Returns:
        Smoothed actions
    """
    noise = np.clip(rng.normal(0.0, noise_std, size=target_actions.shape), -noise_clip, noise_clip)
    return np.clip(target_actions + noise, MIN_ACTION, MAX_ACTION)


class ActorCriticAgent(ABC):
    """Deterministic actor with target networks, Adam optimizers and delayed updates.

    Subclasses own their critics and define the critic loss; the actor path
    (DPG through a critic mean), exploration, Polyak updates, counters,
    snapshots and checkpoints live here.
    """

    name = "agent"

    def __init__(self, obs_dim: int, action_dim: int, settings: Any, seed: int, label: str = ""):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.settings = settings
        self.gamma = settings.gamma
        self.tau = settings.tau
        self.batch_size = settings.batch_size
        self.start_timesteps = settings.start_timesteps
        self.policy_freq = getattr(settings, "policy_freq", 1)
        self.critic_updates = 0
        self.actor_updates = 0
        self.seed = seed

        self._init_rng = make_rng(seed, self.name, "init")
        self._noise_rng = make_rng(seed, self.name, "noise", label)
        self._target_rng = make_rng(seed, self.name, "target", label)

        self.actor = Mlp.create(
            obs_dim,
            settings.hidden_sizes,
            action_dim,
            Activation(settings.activation),
            self._init_rng,
            output_activation=Activation.TANH,
        )
        self.actor_target = self.actor.copy()
        self.actor_opt = AdamState.for_net(self.actor, settings.actor_lr)

    # Networks

    def _critic(self, output_size: int) -> Mlp:
        return Mlp.create(
            self.obs_dim + self.action_dim,
            self.settings.hidden_sizes,
            output_size,
            Activation(self.settings.activation),
            self._init_rng,
        )

    @abstractmethod
    def critics(self) -> list[Mlp]:
        """Online critics in gradient order."""

    @abstractmethod
    def critic_optimizers(self) -> list[AdamState]:
        """Adam states matching critics()."""

    @abstractmethod
    def networks(self) -> dict[str, Mlp]:
        """Every network by name, targets included."""

    @abstractmethod
    def _target_pairs(self) -> list[tuple[Mlp, Mlp]]:
        """(target, online) pairs blended by soft_update."""

    @abstractmethod
    def critic_gradients(self, batch: SampledBatch) -> CriticGradients:
        """Critic loss gradients on one batch under the current parameters."""

    @abstractmethod
    def _q_action_gradient(self, states: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(dQ/da rows, Q values) of the critic used by the actor."""

    # Acting

    def select_action(self, state: np.ndarray, explore: bool = False) -> np.ndarray:
        """Policy action, with exploration noise when exploring, clipped to [-1, 1]."""
        action = self.actor(np.asarray(state, dtype=np.float64))
        if explore:
            action = action + self._exploration_noise()
        return np.clip(action, MIN_ACTION, MAX_ACTION)

    def _exploration_noise(self) -> np.ndarray:
        std = self.settings.exploration_noise
        if std == 0:
            return np.zeros(self.action_dim)
        return self._noise_rng.normal(0.0, std, size=self.action_dim)

    def random_action(self) -> np.ndarray:
        """Uniform action used during warmup."""
        return self._noise_rng.uniform(MIN_ACTION, MAX_ACTION, size=self.action_dim)

    def reset_noise(self) -> None:
        """Called at episode start; stateless noise needs nothing."""

    def _inputs(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        if states.shape[-1] != self.obs_dim or actions.shape[-1] != self.action_dim:
            raise ShapeMismatchError(
                f"expected state/action widths {self.obs_dim}/{self.action_dim}, "
                f"got {states.shape}/{actions.shape}"
            )
        return np.concatenate([states, actions], axis=-1)

    # Updates

    def _guard_finite(self, grads: list[np.ndarray], what: str) -> None:
        if not nn.grads_finite(grads):
            raise InvariantViolationError(f"non-finite {what} gradient")

    def apply_critic(self, gradients: CriticGradients) -> bool:
        """Apply critic gradients; returns True when a delayed actor update is due."""
        for grads in gradients.grads:
            self._guard_finite(grads, "critic")
        for critic, opt, grads in zip(self.critics(), self.critic_optimizers(), gradients.grads):
            nn.adam_step(critic, grads, opt)
        self.critic_updates += 1
        return self.critic_updates % self.policy_freq == 0

    def actor_gradients(self, states: np.ndarray) -> ActorGradients:
        """Deterministic policy gradient ascending the critic's Q(s, pi(s)).

        Args:
            states: Batch of states

        Returns:
            Descent gradients of -mean Q with respect to actor parameters
        """
        actions, cache = nn.forward(self.actor, states)
        dq_da, q = self._q_action_gradient(states, actions)
        grads, _ = nn.backward(self.actor, cache, -dq_da / len(states))
        return ActorGradients(grads=grads, q_mean=float(np.mean(q)))

    def apply_actor(self, gradients: ActorGradients) -> None:
        self._guard_finite(gradients.grads, "actor")
        nn.adam_step(self.actor, gradients.grads, self.actor_opt)
        self.actor_updates += 1

    def soft_update(self) -> None:
        """Polyak-blend every target network toward its online network."""
        for target, online in self._target_pairs():
            nn.soft_update(target, online, self.tau)

    def train_step(self, buffer, beta: float = 1.0) -> dict[str, float]:
        """One learner iteration: critic update, priorities, delayed actor and target updates.

        Args:
            buffer: Replay exposing sample(batch, beta) and reprioritize(batch, losses)
            beta: Importance-sampling exponent for prioritized replay

        Returns:
            Diagnostics (losses, Q statistics, gradient norms, update counters)
        """
        batch = buffer.sample(self.batch_size, beta)
        critic = self.critic_gradients(batch)
        due = self.apply_critic(critic)
        buffer.reprioritize(batch, critic.losses)

        diagnostics = dict(critic.diagnostics)
        diagnostics["critic_loss"] = critic.loss
        diagnostics["critic_grad_norm"] = sum(nn.grad_norm(g) for g in critic.grads)
        if due:
            actor = self.actor_gradients(batch.states)
            self.apply_actor(actor)
            self.soft_update()
            diagnostics["actor_q"] = actor.q_mean
            diagnostics["actor_grad_norm"] = nn.grad_norm(actor.grads)
        diagnostics["critic_updates"] = self.critic_updates
        diagnostics["actor_updates"] = self.actor_updates
        return diagnostics

    # Snapshots and checkpoints

    def snapshot(self) -> dict[str, np.ndarray]:
        """Flat parameter copies of every network."""
        return {name: net.flat() for name, net in self.networks().items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        """Load parameters from a snapshot taken on an identically shaped agent."""
        nets = self.networks()
        for name, vector in snapshot.items():
            nets[name].load_flat(vector)

    def policy_snapshot(self) -> Mlp:
        return self.actor.copy()

    def checkpoint_state(self) -> dict[str, Any]:
        """Networks (binary layout), optimizer moments and counters."""
        state: dict[str, Any] = {
            f"net/{name}": np.frombuffer(nn.dumps(net), dtype=np.uint8)
            for name, net in self.networks().items()
        }
        optimizers = {"actor": self.actor_opt}
        optimizers.update({f"critic{i}": opt for i, opt in enumerate(self.critic_optimizers())})
        for name, opt in optimizers.items():
            state[f"opt/{name}/step"] = np.array(opt.step)
            for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                state[f"opt/{name}/m{i}"] = m
                state[f"opt/{name}/v{i}"] = v
        state["counters"] = np.array([self.critic_updates, self.actor_updates])
        return state

    def load_checkpoint_state(self, state: dict[str, Any]) -> None:
        nets = self.networks()
        for name, net in nets.items():
            loaded = nn.loads(np.asarray(state[f"net/{name}"], dtype=np.uint8).tobytes())
            if loaded.widths != net.widths:
                raise ShapeMismatchError(
                    f"checkpoint network {name} has widths {loaded.widths}, expected {net.widths}"
                )
            net.load_flat(loaded.flat())
        optimizers = {"actor": self.actor_opt}
        optimizers.update({f"critic{i}": opt for i, opt in enumerate(self.critic_optimizers())})
        for name, opt in optimizers.items():
            opt.step = int(state[f"opt/{name}/step"])
            for i in range(len(opt.m)):
                opt.m[i][...] = state[f"opt/{name}/m{i}"]
                opt.v[i][...] = state[f"opt/{name}/v{i}"]
        self.critic_updates, self.actor_updates = (int(c) for c in state["counters"])

    def describe(self) -> Optional[str]:
        widths = "x".join(str(w) for w in self.actor.widths)
        return f"{self.name} actor {widths}, {len(self.networks())} networks"
