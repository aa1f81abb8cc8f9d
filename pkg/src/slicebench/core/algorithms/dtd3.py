"""Prioritized twin delayed distributional DDPG.

The critic outputs a Gaussian return distribution (mean, log std) per
state-action pair. Targets are sampled from the target critic's distribution
at a smoothed target action, clipped to a band around the current mean, and
fitted by Gaussian negative log-likelihood.
"""

import logging
import math

import numpy as np

from slicebench.core.algorithms import nn
from slicebench.core.algorithms.agent_base import (
    ActorCriticAgent,
    CriticGradients,
    smoothed_target_action,
)
from slicebench.core.algorithms.nn import AdamState, Mlp
from slicebench.core.algorithms.replay import SampledBatch
from slicebench.core.domain.exceptions import InvariantViolationError
from slicebench.core.domain.settings import DTd3Settings

logger = logging.getLogger(__name__)

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
CLIP_SLACK = 1e-9


def gaussian_nll(y: np.ndarray, mu: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Negative log-likelihood of y under N(mu, exp(log_std)^2), elementwise."""
    return HALF_LOG_2PI + log_std + 0.5 * ((y - mu) / np.exp(log_std)) ** 2


def bellman_target(
    rewards: np.ndarray,
    dones: np.ndarray,
    target_mu: np.ndarray,
    target_log_std: np.ndarray,
    q_current: np.ndarray,
    gamma: float,
    clip_boundary: float,
    rng: np.random.Generator,
    samples: int = 1,
) -> np.ndarray:
    """Sampled distributional Bellman targets clipped around the current Q.

    Args:
        rewards: Scaled rewards (B,)
        dones: Terminal flags (B,)
        target_mu: Target critic mean at (s', a~) (B,)
        target_log_std: Target critic log std at (s', a~) (B,)
        q_current: Online critic mean at (s, a) (B,)
        gamma: Discount
        clip_boundary: Half-width g of the band around q_current
        rng: Generator for the return samples
        samples: Draws per transition

    Returns:
        Targets of shape (B, samples), each in [Q - g, Q + g]
    """
    eps = rng.standard_normal((len(rewards), samples))
    z = target_mu[:, None] + np.exp(target_log_std)[:, None] * eps
    y = rewards[:, None] + gamma * (1.0 - dones[:, None]) * z
    return np.clip(y, q_current[:, None] - clip_boundary, q_current[:, None] + clip_boundary)


class DistributionalTd3Agent(ActorCriticAgent):
    """Actor, Gaussian return critic and their two targets."""

    name = "dtd3"

    def __init__(self, obs_dim: int, action_dim: int, settings: DTd3Settings, seed: int, label: str = ""):
        super().__init__(obs_dim, action_dim, settings, seed, label)
        self.critic = self._critic(2)
        self.critic_target = self.critic.copy()
        self.critic_opt = AdamState.for_net(self.critic, settings.critic_lr)
        self.log_std_min = settings.log_std_min
        self.log_std_max = settings.log_std_max

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

    def return_distribution(self, net: Mlp, states: np.ndarray, actions: np.ndarray):
        """(mu, clamped log std, raw output, cache) of a critic network."""
        out, cache = nn.forward(net, self._inputs(states, actions))
        log_std = np.clip(out[:, 1], self.log_std_min, self.log_std_max)
        return out[:, 0], log_std, out, cache

    def q_value(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Q(s, a), the critic mean."""
        return self.return_distribution(self.critic, states, actions)[0]

    def critic_gradients(self, batch: SampledBatch) -> CriticGradients:
        """IS-weighted Gaussian NLL gradients against clipped sampled targets."""
        s = self.settings
        n = len(batch)
        next_actions = smoothed_target_action(
            self.actor_target(batch.next_states), self._target_rng, s.policy_noise, s.noise_clip
        )
        target_mu, target_log_std, _, _ = self.return_distribution(
            self.critic_target, batch.next_states, next_actions
        )
        mu, log_std, raw, cache = self.return_distribution(self.critic, batch.states, batch.actions)

        y = bellman_target(
            batch.rewards * s.reward_scale,
            batch.dones,
            target_mu,
            target_log_std,
            mu,
            self.gamma,
            s.clip_boundary,
            self._target_rng,
            s.target_samples,
        )
        gap = np.abs(y - mu[:, None])
        if np.any(gap > s.clip_boundary + CLIP_SLACK):
            raise InvariantViolationError("Bellman target escaped the clip band")

        per_sample = gaussian_nll(y, mu[:, None], log_std[:, None]).mean(axis=1)
        loss = float(np.mean(batch.weights * per_sample))

        var = np.exp(2.0 * log_std)
        residual = y - mu[:, None]
        scale = batch.weights / n
        d_mu = scale * ((-residual) / var[:, None]).mean(axis=1)
        d_log_std = scale * (1.0 - residual**2 / var[:, None]).mean(axis=1)
        # Clamped log std passes no gradient
        inside = (raw[:, 1] > self.log_std_min) & (raw[:, 1] < self.log_std_max)
        grad_out = np.stack([d_mu, d_log_std * inside], axis=1)
        grads, _ = nn.backward(self.critic, cache, grad_out)

        return CriticGradients(
            grads=[grads],
            losses=per_sample,
            loss=loss,
            diagnostics={
                "q_mean": float(mu.mean()),
                "sigma_mean": float(np.exp(log_std).mean()),
                "target_gap_max": float(gap.max()),
                "target_clip_fraction": float(np.mean(np.isclose(gap, s.clip_boundary))),
            },
        )

    def _q_action_gradient(self, states: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu, _, _, cache = self.return_distribution(self.critic, states, actions)
        grad_out = np.zeros((len(states), 2))
        grad_out[:, 0] = 1.0
        _, d_input = nn.backward(self.critic, cache, grad_out)
        return d_input[:, self.obs_dim :], mu
