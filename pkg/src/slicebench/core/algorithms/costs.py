"""Computing, energy and delay cost models and the scalar network objective."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from slicebench.core.algorithms.channel import BeamformingMatrix
from slicebench.core.domain.exceptions import UnstableQueueError
from slicebench.core.domain.settings import (
    ComputeSettings,
    EnergySettings,
    WeightSettings,
)

logger = logging.getLogger(__name__)

STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class ComputeParams:
    """Computing model constants, all in MOPTS."""

    theta_hat: float
    c_b: float
    delta: float
    core_capacity: float
    cores_per_vnf: int
    total_cpu: float
    zero_tol: float = 1e-12

    @classmethod
    def from_settings(cls, settings: ComputeSettings) -> "ComputeParams":
        return cls(
            theta_hat=settings.theta_hat,
            c_b=settings.c_b,
            delta=settings.delta,
            core_capacity=settings.core_capacity,
            cores_per_vnf=settings.cores_per_vnf,
            total_cpu=settings.total_cpu,
            zero_tol=settings.zero_tol,
        )


@dataclass(frozen=True)
class EnergyParams:
    """Processor and per-VNF power constants."""

    iota: float
    p_z: float
    psi: float
    fronthaul_power: float = 0.0
    circuit_power: float = 0.0
    cores_per_processor: int = 1

    @classmethod
    def from_settings(cls, settings: EnergySettings) -> "EnergyParams":
        return cls(
            iota=settings.iota,
            p_z=settings.p_z,
            psi=settings.psi,
            fronthaul_power=settings.fronthaul_power,
            circuit_power=settings.circuit_power,
            cores_per_processor=settings.cores_per_processor,
        )


@dataclass(frozen=True)
class DelayParams:
    """Per-user M/M/1 rates (packets/slot) and the VNF boot delay."""

    vnf_boot_delay: float
    arrival_rate: np.ndarray
    service_rate: np.ndarray
    tx_rate: np.ndarray

    def __post_init__(self):
        if not (self.arrival_rate.shape == self.service_rate.shape == self.tx_rate.shape):
            raise ValueError("arrival, service and tx rate vectors must share one shape")
        if np.any(self.arrival_rate <= 0):
            raise ValueError("arrival rates must be positive")


@dataclass(frozen=True)
class ObjectiveWeights:
    """Cost weights w1..w3 and the reward scale w4."""

    w1: float
    w2: float
    w3: float
    w4: float

    @classmethod
    def from_settings(cls, settings: WeightSettings) -> "ObjectiveWeights":
        return cls(settings.w1, settings.w2, settings.w3, settings.w4)


@dataclass(frozen=True)
class NetworkCosts:
    """Per-step cost aggregates and per-user terms."""

    compute: float
    energy: float
    delay: float
    per_user_qos: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cpu_fractions: np.ndarray = field(default_factory=lambda: np.zeros(0))
    active_cores: int = 0
    vnf_count: int = 0
    objective: float = 0.0


def baseband_compute(rate: np.ndarray, p: ComputeParams) -> np.ndarray:
    """Coding, FFT and modulation load theta_hat * R_m + C_B per user."""
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(rate < 0):
        raise ValueError("rates must be non-negative")
    return p.theta_hat * rate + p.c_b


def transmission_compute(v_column: np.ndarray, p: ComputeParams) -> float:
    """Beamforming load: delta times the number of APs serving the user."""
    return p.delta * int(np.count_nonzero(np.abs(v_column) > p.zero_tol))


def cpu_fraction(rate: float, v_column: np.ndarray, p: ComputeParams) -> float:
    """CPU share Delta_m needed by one user."""
    return float(baseband_compute(np.array([rate]), p)[0]) + transmission_compute(v_column, p)


def cpu_fractions(rates: np.ndarray, v: BeamformingMatrix, p: ComputeParams) -> np.ndarray:
    """Vectorized Delta_m over all users of a beamforming matrix."""
    nnz = np.count_nonzero(np.abs(v.vectors) > p.zero_tol, axis=0)
    return baseband_compute(rates, p) + p.delta * nnz


def network_compute(rates: np.ndarray, v: BeamformingMatrix, p: ComputeParams) -> float:
    """Total computing demand C_Net = sum_m [theta_hat R_m + delta nnz(v_m)] + M C_B."""
    rates = np.asarray(rates, dtype=np.float64)
    if rates.shape != (v.vectors.shape[1],):
        raise ValueError(f"expected {v.vectors.shape[1]} rates, got shape {rates.shape}")
    return float(cpu_fractions(rates, v, p).sum())


def active_cores(fractions: np.ndarray, p: ComputeParams) -> int:
    """Active cores xi = ceil(sum Delta / core_capacity)."""
    return int(math.ceil(float(np.sum(fractions)) / p.core_capacity))


def vnf_count(cores: int, p: ComputeParams) -> int:
    """VNFs X = ceil(xi / cores_per_vnf)."""
    return int(math.ceil(cores / p.cores_per_vnf))


def active_processors(cores: int, p: EnergyParams) -> int:
    """Processors Z needed to host the active cores."""
    return int(math.ceil(cores / p.cores_per_processor))


def processor_energy(active: int, vnfs: int, p: EnergyParams) -> float:
    """Processor power Z * iota * P_z^3 + X * psi (W)."""
    if active < 0 or vnfs < 0:
        raise ValueError("processor and VNF counts must be non-negative")
    return active * p.iota * p.p_z**3 + vnfs * p.psi


def transmit_energy(v: BeamformingMatrix) -> float:
    """Radiated power summed over APs and users; equals sum of p_m."""
    return float(np.sum(np.abs(v.vectors) ** 2))


def ap_static_energy(n_aps: int, p: EnergyParams) -> float:
    """Fronthaul and circuit power of the APs (zero by default)."""
    return n_aps * (p.fronthaul_power + p.circuit_power)


def unstable_users(d: DelayParams) -> np.ndarray:
    """Indices of users whose processing or transmission queue is unstable."""
    margin = np.minimum(d.service_rate, d.tx_rate) - d.arrival_rate
    return np.flatnonzero(margin <= STABILITY_MARGIN)


def network_delay(
    d: DelayParams, vnf_new: int, new_vnf_users: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Queueing and boot delay of the network and per served user.

    Args:
        d: Per-user rates
        vnf_new: VNFs instantiated this step (x)
        new_vnf_users: Boolean mask of users whose slice booted a VNF this step

    Returns:
        (D_Net, per-user delay vector)

    Raises:
        UnstableQueueError: If any queue has service rate within 1e-9 of its arrival rate
    """
    if vnf_new < 0:
        raise ValueError("vnf_new must be non-negative")
    unstable = unstable_users(d)
    if unstable.size:
        raise UnstableQueueError(
            f"unstable queue(s) for user(s) {unstable.tolist()}", users=tuple(unstable.tolist())
        )

    queueing = 1.0 / (d.service_rate - d.arrival_rate) + 1.0 / (d.tx_rate - d.arrival_rate)
    boot = np.zeros_like(queueing)
    if new_vnf_users is not None:
        boot = np.where(np.asarray(new_vnf_users, dtype=bool), d.vnf_boot_delay, 0.0)
    total = vnf_new * d.vnf_boot_delay + float(queueing.sum())
    return total, boot + queueing


def objective(costs: NetworkCosts, w: ObjectiveWeights, m_t: int) -> float:
    """Per-user weighted cost (w1 C + w2 E + w3 D) / M^(t)."""
    if m_t < 1:
        raise ValueError("objective needs at least one user in the normalization")
    return (w.w1 * costs.compute + w.w2 * costs.energy + w.w3 * costs.delay) / m_t
