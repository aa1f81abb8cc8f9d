"""TD3 and DDPG reference agents."""

import logging

import numpy as np

from slicebench.core.algorithms import nn
from slicebench.core.algorithms.agent_base import (
    ActorCriticAgent,
    CriticGradients,
    smoothed_target_action,
)
from slicebench.core.algorithms.nn import AdamState, Mlp
from slicebench.core.algorithms.replay import SampledBatch
from slicebench.core.domain.enums import ExplorationNoise
from slicebench.core.domain.settings import DdpgSettings, Td3Settings

logger = logging.getLogger(__name__)


def td_target(
    rewards: np.ndarray, dones: np.ndarray, next_q: np.ndarray, gamma: float
) -> np.ndarray:
    """y = r + gamma (1 - done) Q'."""
    return rewards + gamma * (1.0 - dones) * next_q


def _mse_gradients(net: Mlp, cache, q: np.ndarray, y: np.ndarray, weights: np.ndarray):
    grad_out = (2.0 * weights * (q - y) / len(q))[:, None]
    grads, _ = nn.backward(net, cache, grad_out)
    return grads


class OrnsteinUhlenbeckNoise:
    """Mean-reverting exploration process dx = -theta x dt + sigma dW."""

    def __init__(self, size: int, theta: float, sigma: float, rng: np.random.Generator, dt: float = 1.0):
        self.theta = theta
        self.sigma = sigma
        self.dt = dt
        self._rng = rng
        self.state = np.zeros(size)

    def reset(self) -> None:
        self.state = np.zeros_like(self.state)

    def sample(self) -> np.ndarray:
        drift = -self.theta * self.state * self.dt
        diffusion = self.sigma * np.sqrt(self.dt) * self._rng.standard_normal(self.state.shape)
        self.state = self.state + drift + diffusion
        return self.state.copy()


class Td3Agent(ActorCriticAgent):
    """Twin critics with clipped double-Q targets and delayed policy updates."""

    name = "td3"

    def __init__(self, obs_dim: int, action_dim: int, settings: Td3Settings, seed: int, label: str = ""):
        super().__init__(obs_dim, action_dim, settings, seed, label)
        self.critic1 = self._critic(1)
        self.critic2 = self._critic(1)
        self.critic1_target = self.critic1.copy()
        self.critic2_target = self.critic2.copy()
        self.critic1_opt = AdamState.for_net(self.critic1, settings.critic_lr)
        self.critic2_opt = AdamState.for_net(self.critic2, settings.critic_lr)

    def critics(self) -> list[Mlp]:
        return [self.critic1, self.critic2]

    def critic_optimizers(self) -> list[AdamState]:
        return [self.critic1_opt, self.critic2_opt]

    def networks(self) -> dict[str, Mlp]:
        return {
            "actor": self.actor,
            "critic1": self.critic1,
            "critic2": self.critic2,
            "actor_target": self.actor_target,
            "critic1_target": self.critic1_target,
            "critic2_target": self.critic2_target,
        }

    def _target_pairs(self) -> list[tuple[Mlp, Mlp]]:
        return [
            (self.actor_target, self.actor),
            (self.critic1_target, self.critic1),
            (self.critic2_target, self.critic2),
        ]

    def targets(self, batch: SampledBatch) -> np.ndarray:
        """Clipped double-Q targets at smoothed target actions."""
        s = self.settings
        next_actions = smoothed_target_action(
            self.actor_target(batch.next_states), self._target_rng, s.policy_noise, s.noise_clip
        )
        inputs = self._inputs(batch.next_states, next_actions)
        next_q = np.minimum(self.critic1_target(inputs)[:, 0], self.critic2_target(inputs)[:, 0])
        return td_target(batch.rewards * s.reward_scale, batch.dones, next_q, self.gamma)

    def critic_gradients(self, batch: SampledBatch) -> CriticGradients:
        y = self.targets(batch)
        inputs = self._inputs(batch.states, batch.actions)
        q1, cache1 = nn.forward(self.critic1, inputs)
        q2, cache2 = nn.forward(self.critic2, inputs)
        q1, q2 = q1[:, 0], q2[:, 0]
        per_sample = (q1 - y) ** 2 + (q2 - y) ** 2
        return CriticGradients(
            grads=[
                _mse_gradients(self.critic1, cache1, q1, y, batch.weights),
                _mse_gradients(self.critic2, cache2, q2, y, batch.weights),
            ],
            losses=np.abs(q1 - y),
            loss=float(np.mean(batch.weights * per_sample)),
            diagnostics={"q_mean": float(q1.mean()), "target_mean": float(y.mean())},
        )

    def _q_action_gradient(self, states: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q, cache = nn.forward(self.critic1, self._inputs(states, actions))
        _, d_input = nn.backward(self.critic1, cache, np.ones_like(q))
        return d_input[:, self.obs_dim :], q[:, 0]


class DdpgAgent(ActorCriticAgent):
    """Single critic, actor updated every step, Gaussian or OU exploration."""

    name = "ddpg"

    def __init__(self, obs_dim: int, action_dim: int, settings: DdpgSettings, seed: int, label: str = ""):
        super().__init__(obs_dim, action_dim, settings, seed, label)
        self.critic = self._critic(1)
        self.critic_target = self.critic.copy()
        self.critic_opt = AdamState.for_net(self.critic, settings.critic_lr)
        self.ou_noise = None
        if ExplorationNoise(settings.noise) is ExplorationNoise.OU:
            self.ou_noise = OrnsteinUhlenbeckNoise(
                action_dim, settings.ou_theta, settings.exploration_noise, self._noise_rng
            )

    def critics(self) -> list[Mlp]:
        return [self.critic]

    def critic_optimizers(self) -> list[AdamState]:
        return [self.critic_opt]

    def networks(self) -> dict[str, Mlp]:
        return {
            "actor": self.actor,
            "critic": self.critic,
            "actor_target": self.actor_target,
            "critic_target": self.critic_target,
        }

    def _target_pairs(self) -> list[tuple[Mlp, Mlp]]:
        return [(self.actor_target, self.actor), (self.critic_target, self.critic)]

    def _exploration_noise(self) -> np.ndarray:
        if self.ou_noise is not None:
            return self.ou_noise.sample()
        return super()._exploration_noise()

    def reset_noise(self) -> None:
        if self.ou_noise is not None:
            self.ou_noise.reset()

    def targets(self, batch: SampledBatch) -> np.ndarray:
        next_actions = self.actor_target(batch.next_states)
        next_q = self.critic_target(self._inputs(batch.next_states, next_actions))[:, 0]
        return td_target(
            batch.rewards * self.settings.reward_scale, batch.dones, next_q, self.gamma
        )

    def critic_gradients(self, batch: SampledBatch) -> CriticGradients:
        y = self.targets(batch)
        q, cache = nn.forward(self.critic, self._inputs(batch.states, batch.actions))
        q = q[:, 0]
        return CriticGradients(
            grads=[_mse_gradients(self.critic, cache, q, y, batch.weights)],
            losses=np.abs(q - y),
            loss=float(np.mean(batch.weights * (q - y) ** 2)),
            diagnostics={"q_mean": float(q.mean()), "target_mean": float(y.mean())},
        )

    def _q_action_gradient(self, states: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q, cache = nn.forward(self.critic, self._inputs(states, actions))
        _, d_input = nn.backward(self.critic, cache, np.ones_like(q))
        return d_input[:, self.obs_dim :], q[:, 0]
