"""Tests for the slicing environment and its reward pieces."""

import logging

import gymnasium as gym
import numpy as np
import pytest

from slicebench.core.algorithms import costs as cost_model
from slicebench.core.algorithms.costs import ObjectiveWeights
from slicebench.core.domain.enums import ViolationKind
from slicebench.core.domain.exceptions import DegenerateObjectiveError
from slicebench.core.domain.settings import PenaltySettings
from slicebench.core.services.slicing_env import (
    ENV_ID,
    SliceAction,
    SlicingEnv,
    UserMetrics,
    admission_control,
    constraint_indicator,
    idle_reward,
    penalty,
    reward,
)

W = ObjectiveWeights(1.0, 2.0, 1.0, 100.0)


@pytest.fixture
def env(desk_config):
    return SlicingEnv(desk_config)


def rollout(env, seed, actions):
    obs, _ = env.reset(seed=seed)
    trace = [obs]
    rewards = []
    for a in actions:
        obs, r, _, _, _ = env.step(a)
        trace.append(obs)
        rewards.append(r)
    return np.array(trace), np.array(rewards)


def test_spaces_match_slice_count(env):
    assert env.observation_space.shape == (18,)
    assert env.action_space.shape == (6,)
    obs, info = env.reset(seed=0)
    assert obs.shape == (18,)
    assert env.observation_space.contains(obs)
    np.testing.assert_allclose(info["allocation"], 180.0)


def test_random_actions_keep_reward_and_observation_bounds(env):
    """Test reward in [-1, 1] and observation in [0, 1] over random steps."""
    rng = np.random.default_rng(0)
    env.reset(seed=1)
    for t in range(2000):
        obs, r, terminated, truncated, info = env.step(rng.uniform(-1.0, 1.0, 6))
        assert -1.0 <= r <= 1.0
        assert np.all((obs >= 0.0) & (obs <= 1.0))
        assert not terminated
        assert info["objective"] > 0 or info["users"] == 0
        if truncated:
            env.reset()


def test_episode_truncates_at_length(env):
    env.reset(seed=2)
    flags = [env.step(np.zeros(6))[3] for _ in range(50)]
    assert flags[-1] is True
    assert not any(flags[:-1])


def test_same_seed_same_trajectory(desk_config):
    """Test that two environments with one seed and one action sequence agree exactly."""
    actions = np.random.default_rng(5).uniform(-1.0, 1.0, (120, 6))
    obs_a, rew_a = rollout(SlicingEnv(desk_config), 11, actions)
    obs_b, rew_b = rollout(SlicingEnv(desk_config), 11, actions)
    np.testing.assert_array_equal(obs_a, obs_b)
    np.testing.assert_array_equal(rew_a, rew_b)
    _, rew_c = rollout(SlicingEnv(desk_config), 12, actions)
    assert not np.array_equal(rew_a, rew_c)


def test_gym_make_builds_registered_env(desk_config):
    env = gym.make(ENV_ID, config=desk_config)
    obs, _ = env.reset(seed=0)
    assert obs.shape == (18,)
    env.close()


def test_info_reports_per_slice_kpis(env):
    env.reset(seed=3)
    _, _, _, _, info = env.step(np.zeros(6))
    for key in ("slice_admission_rate", "slice_latency", "slice_cpu_utilization", "slice_energy"):
        assert np.asarray(info[key]).shape == (3,)
    assert set(info["violations"]) == {k.value for k in ViolationKind}
    assert 0.0 <= info["admission_rate"] <= 1.0
    assert info["normalizer"] >= 1


def test_out_of_box_action_is_clipped_and_flagged(env):
    env.reset(seed=4)
    _, _, _, _, info = env.step(np.array([5.0, 0.0, 0.0, 0.0, 0.0, -3.0]))
    assert info["action_clipped"]


def test_from_normalized_maps_units():
    action, clipped = SliceAction.from_normalized(np.array([1.0, -0.5, 2.0, -1.0]), 2, 120.0, 1.0)
    np.testing.assert_allclose(action.cpu_delta, [120.0, -60.0])
    np.testing.assert_allclose(action.power, [1.0, 0.0])
    assert clipped
    with pytest.raises(ValueError):
        SliceAction.from_normalized(np.zeros(3), 2, 120.0, 1.0)


def test_cpu_scaling_frees_first_and_honours_priority_reserve(env):
    """Test decreases before increases and the reserve kept for the first slice."""
    env.reset(seed=0)
    env.allocation = np.array([10.0, 500.0, 500.0])
    allocation, clipped = env._scale_cpu(np.array([0.0, 100.0, -50.0]))
    # room = 1080 - 960 - (60 - 10)
    np.testing.assert_allclose(allocation, [10.0, 570.0, 450.0])
    assert clipped

    env.allocation = np.array([5.0, 100.0, 100.0])
    allocation, clipped = env._scale_cpu(np.array([-100.0, 20.0, 0.0]))
    np.testing.assert_allclose(allocation, [0.0, 120.0, 100.0])
    assert clipped


def test_allocation_never_exceeds_usable_pool(env):
    env.reset(seed=6)
    for _ in range(30):
        _, _, _, _, info = env.step(np.ones(6))
        assert info["allocation"].sum() <= env.usable_cpu + 1e-9


def test_admission_control_caps_and_cpu():
    """Test that admission respects user caps and CPU room."""
    result = admission_control(
        arrivals=np.array([2, 0, 1]),
        active=np.array([1, 0, 0]),
        max_users=np.array([2, 3, 3]),
        slice_load=np.array([50.0, 0.0, 0.0]),
        allocation=np.array([120.0, 100.0, 10.0]),
        nominal_demand=np.array([60.0, 60.0, 60.0]),
        rng=np.random.default_rng(0),
    )
    np.testing.assert_array_equal(result.admitted, [1, 0, 0])
    np.testing.assert_array_equal(result.rejected, [1, 0, 1])
    assert result.arrived == 3
    assert result.rate == pytest.approx(1 / 3)
    assert sorted(result.order) == [0, 0, 2]


def test_admission_rate_is_one_without_arrivals():
    result = admission_control(
        np.zeros(2, dtype=int), np.zeros(2), np.ones(2), np.zeros(2), np.ones(2), np.ones(2),
        np.random.default_rng(0),
    )
    assert result.rate == 1.0


def metrics(**overrides):
    values = dict(
        sinr=np.array([10.0, 4.0]),
        sinr_threshold=np.array([10.0, 5.0]),
        cpu_fraction=np.array([100.0, 100.0]),
        cpu_threshold=np.array([100.0, 120.0]),
        rate=np.array([5.0, 5.0]),
        required_rate=np.array([5.0, 4.0]),
        delay=np.array([30.0, 80.0]),
        delay_budget=np.array([30.0, 70.0]),
    )
    values.update(overrides)
    return UserMetrics(**values)


def test_constraint_indicator_is_non_strict():
    flags, kinds = constraint_indicator(metrics())
    np.testing.assert_array_equal(flags, [False, True])
    assert kinds[0] == set()
    assert kinds[1] == {ViolationKind.SINR, ViolationKind.DELAY}


def test_penalty_takes_largest_coefficient_per_user():
    coeffs = PenaltySettings()
    kinds = [{ViolationKind.SINR, ViolationKind.DELAY}, set(), {ViolationKind.MSR}]
    assert penalty(kinds, coeffs) == pytest.approx(-(0.5 + 0.1))
    assert penalty(kinds, coeffs, rejected=3) == pytest.approx(-(0.5 + 0.1) - 0.03)
    assert penalty([set(), set()], coeffs) == 0.0


def test_reward_formula_clamp_and_degenerate(caplog):
    assert reward(2.0, -0.1, W) == pytest.approx(0.004)
    with caplog.at_level(logging.WARNING):
        assert reward(1e-3, 0.0, ObjectiveWeights(1.0, 1.0, 1.0, 1.0)) == 1.0
    assert "clamped" in caplog.text
    assert reward(1.0, -500.0, ObjectiveWeights(1.0, 1.0, 1.0, 1.0)) == -1.0
    with pytest.raises(DegenerateObjectiveError):
        reward(0.0, 0.0, W)


def test_penalty_settings_enforce_ordering():
    with pytest.raises(ValueError):
        PenaltySettings(rho_sinr=0.1, rho_cpu=0.3)


@pytest.mark.slow
def test_reward_contract_over_ten_thousand_steps(desk_config):
    env = SlicingEnv(desk_config)
    rng = np.random.default_rng(42)
    env.reset(seed=0)
    for _ in range(10_000):
        obs, r, _, truncated, _ = env.step(rng.uniform(-1.0, 1.0, 6))
        assert -1.0 <= r <= 1.0
        assert np.all((obs >= 0.0) & (obs <= 1.0))
        if truncated:
            env.reset()


def test_idle_network_runs_no_vnfs(env):
    """Test that a step with no served users charges neither cores nor VNFs."""
    env.reset(seed=0)
    none = np.zeros(0, dtype=np.int64)
    costs, _, extra = env._evaluate(none, none, np.ones(3))
    assert costs.active_cores == 0
    assert costs.vnf_count == 0
    assert costs.energy == 0.0
    assert costs.objective == 0.0
    np.testing.assert_array_equal(extra["slice_energy"], 0.0)


def test_vnf_count_follows_active_cores(env):
    """Test X = ceil(xi / cores_per_vnf) for a loaded network, not a per-slice sum."""
    env.reset(seed=0)
    users = np.array([0, len(env.slice_of) - 1])
    costs, _, _ = env._evaluate(users, env.slice_of[users], np.ones(3))
    xi = cost_model.active_cores(costs.cpu_fractions, env.compute)
    assert costs.active_cores == xi
    assert costs.vnf_count == cost_model.vnf_count(xi, env.compute)
    assert costs.vnf_count == int(np.ceil(xi / 4))
    processors = cost_model.active_processors(xi, env.energy_params)
    processor = cost_model.processor_energy(processors, costs.vnf_count, env.energy_params)
    transmit = costs.energy - processor
    assert transmit == pytest.approx(2.0, rel=1e-9)


def test_idle_reward_is_penalty_only():
    assert idle_reward(0.0, W) == 0.0
    assert idle_reward(-5.0, W) == pytest.approx(-0.05)
    assert idle_reward(-500.0, W) == -1.0


def test_near_pole_queue_costs_no_more_than_unstable(env, desk_config):
    """Test that a barely stable queue is charged at most the unstable delay."""
    env.reset(seed=0)
    user = np.array([0])
    l = env.slice_of[0]
    allocation = env.allocation.copy()
    allocation[l] = (env._attr["packet_rate"][l] + 1e-6) / desk_config.delay.service_coupling
    env.allocation = allocation
    costs, metrics, _ = env._evaluate(user, env.slice_of[user], np.ones(3))
    cap = desk_config.delay.unstable_delay
    assert costs.per_user_qos[0] == pytest.approx(cap)
    assert metrics.delay[0] == pytest.approx(cap)
    assert costs.delay == pytest.approx(cap)


@pytest.mark.parametrize("k", [1, 3, 7])
def test_admission_saturates_when_cpu_is_exactly_used(k):
    """Test that k users fill the allocation exactly and the next one is turned away."""
    result = admission_control(
        arrivals=np.array([k + 1]),
        active=np.array([0]),
        max_users=np.array([50]),
        slice_load=np.array([0.0]),
        allocation=np.array([25.0 * k]),
        nominal_demand=np.array([25.0]),
        rng=np.random.default_rng(k),
    )
    np.testing.assert_array_equal(result.admitted, [k])
    np.testing.assert_array_equal(result.rejected, [1])
    assert result.rate == pytest.approx(k / (k + 1))
