"""Tests for the computing, energy and delay cost models."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slicebench.core.algorithms.channel import BeamformingMatrix
from slicebench.core.algorithms.costs import (
    ComputeParams,
    DelayParams,
    EnergyParams,
    NetworkCosts,
    ObjectiveWeights,
    active_cores,
    active_processors,
    baseband_compute,
    cpu_fraction,
    network_compute,
    network_delay,
    objective,
    processor_energy,
    transmission_compute,
    transmit_energy,
    unstable_users,
    vnf_count,
)
from slicebench.core.domain.exceptions import UnstableQueueError


def compute_params(**kwargs) -> ComputeParams:
    values = dict(
        theta_hat=10.0, c_b=20.0, delta=1.0, core_capacity=4.0, cores_per_vnf=2, total_cpu=1000.0
    )
    values.update(kwargs)
    return ComputeParams(**values)


def beamformer(vectors: np.ndarray) -> BeamformingMatrix:
    return BeamformingMatrix(vectors, np.sum(np.abs(vectors) ** 2, axis=0))


def test_baseband_compute_linear_in_rate():
    p = compute_params()
    np.testing.assert_allclose(baseband_compute(np.array([0.0, 1.5]), p), [20.0, 35.0])
    with pytest.raises(ValueError):
        baseband_compute(np.array([-1.0]), p)


def test_transmission_compute_counts_serving_aps():
    """Test that the step function counts non-zero beamforming entries."""
    assert transmission_compute(np.ones(150, dtype=complex), compute_params(delta=1.0)) == 150
    column = np.ones(10, dtype=complex)
    column[::2] = 0.0
    assert transmission_compute(column, compute_params(delta=2.0)) == 10


def test_network_compute_matches_per_user_sum(rng):
    """Test C_Net against an explicit per-user loop."""
    p = compute_params(delta=0.5)
    vectors = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    vectors[1, 2] = 0.0
    rates = rng.uniform(0.0, 5.0, 3)
    expected = sum(cpu_fraction(rates[m], vectors[:, m], p) for m in range(3))
    assert network_compute(rates, beamformer(vectors), p) == pytest.approx(expected, abs=1e-12)

    one = beamformer(vectors[:, :1])
    assert network_compute(rates[:1], one, p) == pytest.approx(
        baseband_compute(rates[:1], p)[0] + transmission_compute(vectors[:, 0], p)
    )


def test_network_compute_idle_users_cost_fft_only():
    p = compute_params()
    v = beamformer(np.zeros((4, 3), dtype=complex))
    assert network_compute(np.zeros(3), v, p) == pytest.approx(3 * p.c_b)


def test_core_and_vnf_ceilings():
    """Test the ceiling chain on the documented cases."""
    p = compute_params(core_capacity=4.0, cores_per_vnf=2)
    cores = active_cores(np.array([4.0, 6.5]), p)
    assert cores == 3
    assert vnf_count(cores, p) == 2
    assert active_cores(np.array([8.0]), p) == 2


@settings(max_examples=200, deadline=None)
@given(
    fractions=st.lists(st.floats(0.0, 500.0), min_size=1, max_size=20),
    capacity=st.floats(0.5, 200.0),
    per_vnf=st.integers(1, 8),
)
def test_ceiling_chain_invariants(fractions, capacity, per_vnf):
    """Test that u*X >= xi and capacity*xi >= sum Delta always hold."""
    p = compute_params(core_capacity=capacity, cores_per_vnf=per_vnf)
    cores = active_cores(np.array(fractions), p)
    vnfs = vnf_count(cores, p)
    assert capacity * cores >= sum(fractions) - 1e-9
    assert per_vnf * vnfs >= cores
    assert vnfs == math.ceil(cores / per_vnf)


def test_processor_energy_constants():
    """Test Z*iota*P_z^3 + X*psi on the reference constants."""
    p = EnergyParams(iota=1e-26, p_z=1e9, psi=2.0)
    assert processor_energy(1, 0, p) == pytest.approx(10.0)
    assert processor_energy(0, 3, p) == pytest.approx(6.0)
    assert processor_energy(2, 0, p) == pytest.approx(2 * processor_energy(1, 0, p))
    with pytest.raises(ValueError):
        processor_energy(-1, 0, p)


def test_active_processors_round_up():
    p = EnergyParams(iota=1e-26, p_z=1e9, psi=5.0, cores_per_processor=4)
    assert [active_processors(c, p) for c in (0, 1, 4, 5)] == [0, 1, 1, 2]


def test_transmit_energy_equals_entrywise_sum(rng):
    vectors = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    v = beamformer(vectors)
    oracle = sum(abs(vectors[n, m]) ** 2 for n in range(4) for m in range(3))
    assert transmit_energy(v) == pytest.approx(oracle, abs=1e-12)
    assert transmit_energy(v) == pytest.approx(v.powers.sum(), abs=1e-9)


def test_network_delay_worked_case():
    """Test the single-user case with one new VNF: 5 + 1 + 1."""
    d = DelayParams(5.0, np.array([1.0]), np.array([2.0]), np.array([2.0]))
    total, per_user = network_delay(d, 1, np.array([True]))
    assert total == pytest.approx(7.0)
    np.testing.assert_allclose(per_user, [7.0])


def test_network_delay_matches_term_oracle(rng):
    arrival = rng.uniform(0.1, 1.0, 3)
    service = arrival + rng.uniform(0.5, 2.0, 3)
    tx = arrival + rng.uniform(0.5, 2.0, 3)
    d = DelayParams(3.0, arrival, service, tx)
    total, per_user = network_delay(d, 2, np.array([False, True, False]))
    oracle = [1 / (service[m] - arrival[m]) + 1 / (tx[m] - arrival[m]) for m in range(3)]
    assert total == pytest.approx(2 * 3.0 + sum(oracle), abs=1e-12)
    np.testing.assert_allclose(per_user, [oracle[0], oracle[1] + 3.0, oracle[2]], atol=1e-12)


def test_network_delay_monotone_in_rates():
    """Test that delay falls with service rate and rises with arrival rate."""
    base = DelayParams(0.0, np.array([1.0]), np.array([2.0]), np.array([3.0]))
    faster = DelayParams(0.0, np.array([1.0]), np.array([2.5]), np.array([3.0]))
    busier = DelayParams(0.0, np.array([1.2]), np.array([2.0]), np.array([3.0]))
    assert network_delay(faster, 0)[0] < network_delay(base, 0)[0] < network_delay(busier, 0)[0]


def test_unstable_queue_raises():
    """Test that service within the stability margin of arrivals is rejected."""
    d = DelayParams(5.0, np.array([1.0, 1.0]), np.array([2.0, 1.0 + 1e-12]), np.array([2.0, 2.0]))
    np.testing.assert_array_equal(unstable_users(d), [1])
    with pytest.raises(UnstableQueueError) as info:
        network_delay(d, 0)
    assert info.value.users == (1,)


def test_delay_params_shape_check():
    with pytest.raises(ValueError):
        DelayParams(1.0, np.array([1.0]), np.array([2.0, 3.0]), np.array([2.0]))


def test_objective_normalized_by_users():
    """Test (w1 C + w2 E + w3 D) / M and its halving when M doubles."""
    costs = NetworkCosts(compute=10.0, energy=10.0, delay=10.0)
    w = ObjectiveWeights(1.0, 2.0, 1.0, 100.0)
    assert objective(costs, w, 4) == pytest.approx(10.0)
    assert objective(costs, w, 8) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        objective(costs, w, 0)
