"""Network slicing MDP over a cell-free massive-MIMO network.

Each step the agent scales the CPU allocation of every slice and sets the
transmit power of its users. The environment then runs departures, arrivals,
admission control, beamforming and the cost models, and returns a reward
that trades per-user cost against constraint penalties.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import gymnasium as gym
import numpy as np

from slicebench.core.algorithms import costs as cost_model
from slicebench.core.algorithms.channel import (
    ChannelMatrix,
    RadioParams,
    Topology,
    achievable_rate,
    generate_channel,
    rzf_beamformer,
    sinr,
)
from slicebench.core.algorithms.costs import (
    ComputeParams,
    DelayParams,
    EnergyParams,
    NetworkCosts,
    ObjectiveWeights,
)
from slicebench.core.domain.enums import ViolationKind
from slicebench.core.domain.exceptions import DegenerateObjectiveError
from slicebench.core.domain.settings import ExperimentConfig, PenaltySettings
from slicebench.utils.seeding import make_rng

logger = logging.getLogger(__name__)

ENV_ID = "smartech-v1"
N_FEATURES = 6
OBJECTIVE_FLOOR = 1e-12


@dataclass(frozen=True)
class SliceAction:
    """Per-slice CPU change (MOPTS) and per-user transmit power (W)."""

    cpu_delta: np.ndarray
    power: np.ndarray

    @classmethod
    def from_normalized(
        cls, action: np.ndarray, n_slices: int, max_cpu_step: float, max_power: float
    ) -> tuple["SliceAction", bool]:
        """Map a [-1, 1]^{2L} vector to physical units.

        Returns:
            (action, True if any component was outside [-1, 1])
        """
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (2 * n_slices,):
            raise ValueError(f"expected action of shape ({2 * n_slices},), got {action.shape}")
        bounded = np.clip(action, -1.0, 1.0)
        clipped = bool(np.any(bounded != action))
        return (
            cls(
                cpu_delta=bounded[:n_slices] * max_cpu_step,
                power=(bounded[n_slices:] + 1.0) / 2.0 * max_power,
            ),
            clipped,
        )


@dataclass
class EnvState:
    """Six per-slice features before normalization."""

    arrivals: np.ndarray
    allocation: np.ndarray
    delay: np.ndarray
    energy: np.ndarray
    served: np.ndarray
    vnfs: np.ndarray

    def stack(self) -> np.ndarray:
        return np.concatenate(
            [self.arrivals, self.allocation, self.delay, self.energy, self.served, self.vnfs]
        ).astype(np.float64)


@dataclass
class StepOutcome:
    """Result of one environment transition."""

    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


@dataclass
class UserMetrics:
    """Per served user quantities checked by the constraint indicator."""

    sinr: np.ndarray
    sinr_threshold: np.ndarray
    cpu_fraction: np.ndarray
    cpu_threshold: np.ndarray
    rate: np.ndarray
    required_rate: np.ndarray
    delay: np.ndarray
    delay_budget: np.ndarray


@dataclass(frozen=True)
class AdmissionResult:
    """Outcome of admission control for one step."""

    admitted: np.ndarray
    rejected: np.ndarray
    order: tuple[int, ...] = ()

    @property
    def arrived(self) -> int:
        return int(self.admitted.sum() + self.rejected.sum())

    @property
    def rate(self) -> float:
        return 1.0 if self.arrived == 0 else float(self.admitted.sum()) / self.arrived


def constraint_indicator(metrics: UserMetrics) -> tuple[np.ndarray, list[set[ViolationKind]]]:
    """Per-user violation flag and the set of violated constraint kinds.

    All four constraints are non-strict inequalities.
    """
    checks = (
        (ViolationKind.SINR, metrics.sinr >= metrics.sinr_threshold),
        (ViolationKind.CPU, metrics.cpu_fraction <= metrics.cpu_threshold),
        (ViolationKind.MSR, metrics.required_rate <= metrics.rate),
        (ViolationKind.DELAY, metrics.delay <= metrics.delay_budget),
    )
    n = len(metrics.sinr)
    kinds: list[set[ViolationKind]] = [set() for _ in range(n)]
    for kind, ok in checks:
        for m in np.flatnonzero(~ok):
            kinds[m].add(kind)
    flags = np.array([bool(k) for k in kinds], dtype=bool)
    return flags, kinds


def penalty(kinds: list[set[ViolationKind]], coeffs: PenaltySettings, rejected: int = 0) -> float:
    """Sum of per-user penalties (the largest violated coefficient) and rejections.

    Args:
        kinds: Violated kinds per user
        coeffs: Penalty coefficients
        rejected: Arrivals turned away this step

    Returns:
        Non-positive penalty sum
    """
    table = {
        ViolationKind.SINR: coeffs.rho_sinr,
        ViolationKind.CPU: coeffs.rho_cpu,
        ViolationKind.MSR: coeffs.rho_msr,
        ViolationKind.DELAY: coeffs.rho_delay,
    }
    total = -sum(max(table[k] for k in user) for user in kinds if user)
    return total - coeffs.rho_reject * rejected


def reward(objective: float, penalties: float, w: ObjectiveWeights) -> float:
    """(1 / objective + penalties) / w4 clamped to [-1, 1].

    Raises:
        DegenerateObjectiveError: If objective <= 1e-12
    """
    if objective <= OBJECTIVE_FLOOR:
        raise DegenerateObjectiveError(f"objective {objective} too small to invert")
    value = (1.0 / objective + penalties) / w.w4
    if not -1.0 <= value <= 1.0:
        logger.warning(f"Reward {value:.4f} clamped to [-1, 1]")
        value = float(np.clip(value, -1.0, 1.0))
    return float(value)


def idle_reward(penalties: float, w: ObjectiveWeights) -> float:
    """Reward of a step with no served users: the penalty term alone, clamped."""
    return float(np.clip(penalties / w.w4, -1.0, 1.0))


def admission_control(
    arrivals: np.ndarray,
    active: np.ndarray,
    max_users: np.ndarray,
    slice_load: np.ndarray,
    allocation: np.ndarray,
    nominal_demand: np.ndarray,
    rng: np.random.Generator,
) -> AdmissionResult:
    """Admit arrivals in random order while caps and CPU allow.

    A request for slice l is admitted iff the slice is below its user cap and
    its projected CPU demand plus the new user's nominal demand fits in the
    slice allocation.

    Args:
        arrivals: Requests per slice
        active: Served users per slice
        max_users: Caps per slice
        slice_load: Projected CPU demand of current users per slice (MOPTS)
        allocation: CPU allocated per slice (MOPTS)
        nominal_demand: Projected CPU demand of one new user per slice
        rng: Ordering generator

    Returns:
        Admitted and rejected counts per slice
    """
    requests = np.repeat(np.arange(len(arrivals)), np.asarray(arrivals, dtype=np.int64))
    order = tuple(int(s) for s in rng.permutation(requests))
    count = np.array(active, dtype=np.int64)
    load = np.array(slice_load, dtype=np.float64)
    admitted = np.zeros(len(arrivals), dtype=np.int64)
    rejected = np.zeros(len(arrivals), dtype=np.int64)
    for s in order:
        fits = load[s] + nominal_demand[s] <= allocation[s]
        if count[s] < max_users[s] and fits:
            count[s] += 1
            load[s] += nominal_demand[s]
            admitted[s] += 1
        else:
            rejected[s] += 1
    return AdmissionResult(admitted=admitted, rejected=rejected, order=order)


class SlicingEnv(gym.Env):
    """Gymnasium environment for per-slice CPU scaling and power control."""

    metadata = {"render_modes": []}

    def __init__(self, config: Optional[ExperimentConfig] = None):
        self.config = config or ExperimentConfig()
        cfg = self.config
        self.slices = cfg.env.slices
        self.n_slices = cfg.env.n_slices
        self.n_subscribers = cfg.env.n_subscribers
        self.episode_length = cfg.env.episode_length

        self.radio = RadioParams(
            cfg.channel.regularizer_noise, cfg.channel.receiver_noise, cfg.channel.snr_gap
        )
        self.compute = ComputeParams.from_settings(cfg.compute)
        self.energy_params = EnergyParams.from_settings(cfg.energy)
        self.weights = ObjectiveWeights.from_settings(cfg.weights)
        self.usable_cpu = cfg.compute.usable_cpu
        self.priority_reserve = cfg.compute.priority_reserve_fraction * cfg.compute.total_cpu
        self.max_cpu_step = cfg.env.cpu_step_fraction * cfg.compute.total_cpu

        self.slice_of = np.repeat(np.arange(self.n_slices), [s.max_users for s in self.slices])
        self.max_users = np.array([s.max_users for s in self.slices])
        self._attr = {
            name: np.array([getattr(s, name) for s in self.slices], dtype=np.float64)
            for name in (
                "sinr_threshold", "cpu_threshold", "delay_budget",
                "arrival_rate", "packet_rate", "tx_rate",
            )
        }
        # One new user at the slice SINR target with every AP serving it
        self.nominal_demand = cost_model.baseband_compute(
            achievable_rate(self._attr["sinr_threshold"], self.radio), self.compute
        ) + self.compute.delta * cfg.channel.n_aps

        self._scale = self._feature_scale()
        self.observation_space = gym.spaces.Box(
            0.0, 1.0, shape=(N_FEATURES * self.n_slices,), dtype=np.float64
        )
        self.action_space = gym.spaces.Box(-1.0, 1.0, shape=(2 * self.n_slices,), dtype=np.float64)

        self._seeded = False
        self.topology: Optional[Topology] = None
        self.channel: Optional[ChannelMatrix] = None
        self.active = np.zeros(self.n_subscribers, dtype=bool)
        self.user_demand = np.zeros(self.n_subscribers)
        self.allocation = np.zeros(self.n_slices)
        self.vnfs = np.zeros(self.n_slices, dtype=np.int64)
        self.state: Optional[EnvState] = None
        self.t = 0

    def _feature_scale(self) -> np.ndarray:
        cfg = self.config
        max_cores = int(np.ceil(self.usable_cpu / self.compute.core_capacity))
        max_vnfs = max(
            cost_model.vnf_count(max_cores, self.compute) + self.n_slices * cfg.env.min_vnfs_per_slice,
            1,
        )
        max_energy = (
            cost_model.processor_energy(
                cost_model.active_processors(max_cores, self.energy_params), max_vnfs, self.energy_params
            )
            + cfg.env.max_power * self.n_subscribers
            + cost_model.ap_static_energy(cfg.channel.n_aps, self.energy_params)
        )
        max_delay = self.max_users * (cfg.delay.unstable_delay + cfg.delay.vnf_boot_delay)
        columns = [
            self.max_users.astype(np.float64),
            np.full(self.n_slices, self.usable_cpu),
            max_delay.astype(np.float64),
            np.full(self.n_slices, max_energy),
            self.max_users.astype(np.float64),
            np.full(self.n_slices, float(max_vnfs)),
        ]
        return np.concatenate(columns)

    def _seed_streams(self, seed: int) -> None:
        self._topology_rng = make_rng(seed, "env", "topology")
        self._fading_rng = make_rng(seed, "env", "fading")
        self._traffic_rng = make_rng(seed, "env", "traffic")
        self._seeded = True

    def observe(self) -> np.ndarray:
        """Min-max normalized observation in [0, 1]^{6L}."""
        return np.clip(self.state.stack() / self._scale, 0.0, 1.0)

    def reset(self, *, seed: Optional[int] = None, options: Optional[dict] = None):
        """Start an episode on a fresh topology and channel draw.

        Args:
            seed: Reseeds every environment stream when given
            options: Unused

        Returns:
            (observation, info)
        """
        super().reset(seed=seed)
        if seed is not None or not self._seeded:
            self._seed_streams(self.config.runtime.seed if seed is None else seed)

        cfg = self.config
        self.topology = Topology.random(
            cfg.channel.n_aps,
            self.n_subscribers,
            cfg.channel.area_side,
            cfg.channel.pathloss_exponent,
            cfg.channel.reference_gain,
            self._topology_rng,
        )
        self.channel = generate_channel(self.topology, self._fading_rng)
        self.active[:] = False
        self.user_demand[:] = 0.0
        self.allocation = np.full(
            self.n_slices, cfg.env.initial_allocation_fraction * self.usable_cpu / self.n_slices
        )
        self.vnfs = np.full(self.n_slices, cfg.env.min_vnfs_per_slice, dtype=np.int64)
        self.t = 0
        self.state = EnvState(
            arrivals=np.zeros(self.n_slices),
            allocation=self.allocation.copy(),
            delay=np.zeros(self.n_slices),
            energy=np.zeros(self.n_slices),
            served=np.zeros(self.n_slices),
            vnfs=self.vnfs.astype(np.float64),
        )
        return self.observe(), {"allocation": self.allocation.copy()}

    def step(self, action: np.ndarray):
        """Apply one normalized action; returns the gymnasium 5-tuple."""
        outcome = self.transition(action)
        return outcome.observation, outcome.reward, outcome.terminated, outcome.truncated, outcome.info

    def _scale_cpu(self, requested: np.ndarray) -> tuple[np.ndarray, bool]:
        """Apply CPU deltas, first slice first, honouring the pool and its priority reserve."""
        allocation = self.allocation.copy()
        applied = np.zeros(self.n_slices)
        for l in range(self.n_slices):
            if requested[l] >= 0:
                continue
            applied[l] = max(requested[l], -allocation[l])
            allocation[l] += applied[l]
        for l in range(self.n_slices):
            if requested[l] <= 0:
                continue
            room = self.usable_cpu - allocation.sum()
            if l != 0:
                room -= max(self.priority_reserve - allocation[0], 0.0)
            applied[l] = min(requested[l], max(room, 0.0))
            allocation[l] += applied[l]
        clipped = bool(np.any(np.abs(applied - requested) > 1e-9))
        return np.clip(allocation, 0.0, self.usable_cpu), clipped

    def _departures(self) -> None:
        leave = self._traffic_rng.random(self.n_subscribers) < 1.0 / self.config.env.mean_holding_time
        departing = self.active & leave
        self.active[departing] = False
        self.user_demand[departing] = 0.0

    def _admit(self, arrivals: np.ndarray) -> AdmissionResult:
        served = np.bincount(self.slice_of[self.active], minlength=self.n_slices)
        load = np.bincount(self.slice_of, weights=self.user_demand * self.active, minlength=self.n_slices)
        result = admission_control(
            arrivals, served, self.max_users, load, self.allocation, self.nominal_demand,
            self._traffic_rng,
        )
        for l, count in enumerate(result.admitted):
            free = np.flatnonzero((self.slice_of == l) & ~self.active)[:count]
            self.active[free] = True
            self.user_demand[free] = self.nominal_demand[l]
        return result

    def transition(self, action: np.ndarray) -> StepOutcome:
        """Run one full step and return the structured outcome."""
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        cfg = self.config
        act, out_of_box = SliceAction.from_normalized(
            action, self.n_slices, self.max_cpu_step, cfg.env.max_power
        )

        self._departures()
        arrivals = self._traffic_rng.poisson(self._attr["arrival_rate"])
        self.allocation, cpu_clipped = self._scale_cpu(act.cpu_delta)
        admission = self._admit(arrivals)

        users = np.flatnonzero(self.active)
        user_slice = self.slice_of[users]
        costs, metrics, per_user = self._evaluate(users, user_slice, act.power)

        flags, kinds = constraint_indicator(metrics)
        penalties = penalty(kinds, cfg.penalties, int(admission.rejected.sum()))
        n_users = max(len(users), 1)
        if len(users):
            value = reward(costs.objective, penalties, self.weights)
        else:
            value = idle_reward(penalties, self.weights)

        self.user_demand[users] = costs.cpu_fractions
        served = np.bincount(user_slice, minlength=self.n_slices).astype(np.float64)
        slice_delay = np.bincount(user_slice, weights=costs.per_user_qos, minlength=self.n_slices)
        self.state = EnvState(
            arrivals=arrivals.astype(np.float64),
            allocation=self.allocation.copy(),
            delay=slice_delay,
            energy=per_user["slice_energy"],
            served=served,
            vnfs=self.vnfs.astype(np.float64),
        )
        self.channel = generate_channel(self.topology, self._fading_rng)
        self.t += 1

        violations = {k.value: int(sum(k in user for user in kinds)) for k in ViolationKind}
        slice_demand = np.bincount(user_slice, weights=costs.cpu_fractions, minlength=self.n_slices)
        arrived_per_slice = admission.admitted + admission.rejected
        info = {
            "objective": costs.objective,
            "compute": costs.compute,
            "energy": costs.energy,
            "delay": costs.delay,
            "penalty": penalties,
            "users": len(users),
            "normalizer": n_users,
            "arrivals": int(arrivals.sum()),
            "rejected": int(admission.rejected.sum()),
            "admission_rate": admission.rate,
            "violating_users": int(flags.sum()),
            "violations": violations,
            "unstable_users": per_user["unstable"],
            "action_clipped": out_of_box or cpu_clipped,
            "slice_admission_rate": np.where(
                arrived_per_slice > 0, admission.admitted / np.maximum(arrived_per_slice, 1), 1.0
            ),
            "slice_latency": np.where(served > 0, slice_delay / np.maximum(served, 1.0), 0.0),
            "slice_cpu_utilization": np.where(
                self.allocation > 0, slice_demand / np.maximum(self.allocation, 1e-12), 0.0
            ),
            "slice_energy": per_user["slice_energy"],
            "allocation": self.allocation.copy(),
        }
        truncated = self.t >= self.episode_length
        return StepOutcome(self.observe(), value, False, truncated, info)

    def _evaluate(self, users: np.ndarray, user_slice: np.ndarray, slice_power: np.ndarray):
        """Beamforming, per-user metrics and network costs for the served users."""
        cfg = self.config
        attr = self._attr
        if len(users):
            h = self.channel.select(users)
            beams = rzf_beamformer(h, self.radio, slice_power[user_slice])
            user_sinr = sinr(h, beams, self.radio)
            rates = achievable_rate(user_sinr, self.radio)
            fractions = cost_model.cpu_fractions(rates, beams, self.compute)
            compute = cost_model.network_compute(rates, beams, self.compute)
            transmit = cost_model.transmit_energy(beams)
            slice_transmit = np.bincount(user_slice, weights=beams.powers, minlength=self.n_slices)
        else:
            user_sinr = rates = fractions = np.zeros(0)
            compute = transmit = 0.0
            slice_transmit = np.zeros(self.n_slices)

        # per-slice counts feed boot detection and the observation; X is network-wide
        slice_demand = np.bincount(user_slice, weights=fractions, minlength=self.n_slices)
        slice_cores = np.ceil(slice_demand / self.compute.core_capacity).astype(np.int64)
        vnfs = np.maximum(
            np.ceil(slice_cores / self.compute.cores_per_vnf).astype(np.int64),
            cfg.env.min_vnfs_per_slice,
        )
        new_vnfs = np.maximum(vnfs - self.vnfs, 0)
        self.vnfs = vnfs

        cores = cost_model.active_cores(fractions, self.compute)
        processors = cost_model.active_processors(cores, self.energy_params)
        vnf_total = cost_model.vnf_count(cores, self.compute)
        processor = cost_model.processor_energy(processors, vnf_total, self.energy_params)
        energy = processor + transmit + cost_model.ap_static_energy(cfg.channel.n_aps, self.energy_params)

        served = np.bincount(user_slice, minlength=self.n_slices)
        service = cfg.delay.service_coupling * self.allocation[user_slice] / np.maximum(
            served[user_slice], 1
        )
        delay_params = DelayParams(
            vnf_boot_delay=cfg.delay.vnf_boot_delay,
            arrival_rate=attr["packet_rate"][user_slice],
            service_rate=service,
            tx_rate=np.minimum(rates * cfg.delay.packets_per_rate, attr["tx_rate"][user_slice]),
        )
        unstable = cost_model.unstable_users(delay_params)
        stable = np.setdiff1d(np.arange(len(users)), unstable)
        booted = new_vnfs[user_slice] > 0
        per_user_delay = np.full(len(users), cfg.delay.unstable_delay) + np.where(
            booted, cfg.delay.vnf_boot_delay, 0.0
        )
        x = int(new_vnfs.sum())
        stable_params = DelayParams(
            vnf_boot_delay=cfg.delay.vnf_boot_delay,
            arrival_rate=delay_params.arrival_rate[stable],
            service_rate=delay_params.service_rate[stable],
            tx_rate=delay_params.tx_rate[stable],
        )
        delay, stable_delay = cost_model.network_delay(stable_params, x, booted[stable])
        # a queue near its pole never costs more than an unstable one
        queueing = stable_delay - np.where(booted[stable], cfg.delay.vnf_boot_delay, 0.0)
        excess = np.maximum(queueing - cfg.delay.unstable_delay, 0.0)
        per_user_delay[stable] = stable_delay - excess
        delay -= float(excess.sum())
        delay += cfg.delay.unstable_delay * len(unstable)
        if len(unstable):
            logger.debug(f"{len(unstable)} unstable queue(s) charged {cfg.delay.unstable_delay}")

        partial = NetworkCosts(
            compute=compute,
            energy=energy,
            delay=delay,
            per_user_qos=per_user_delay,
            cpu_fractions=fractions,
            active_cores=cores,
            vnf_count=vnf_total,
        )
        value = cost_model.objective(partial, self.weights, max(len(users), 1))
        costs = replace(partial, objective=value)

        total_demand = slice_demand.sum()
        shares = (
            slice_demand / total_demand if total_demand > 0 else np.full(self.n_slices, 1.0 / self.n_slices)
        )
        metrics = UserMetrics(
            sinr=user_sinr,
            sinr_threshold=attr["sinr_threshold"][user_slice],
            cpu_fraction=fractions,
            cpu_threshold=attr["cpu_threshold"][user_slice],
            rate=rates,
            required_rate=attr["tx_rate"][user_slice] / cfg.delay.packets_per_rate,
            delay=per_user_delay,
            delay_budget=attr["delay_budget"][user_slice],
        )
        extra = {
            "slice_energy": shares * processor + slice_transmit,
            "unstable": int(len(unstable)),
        }
        return costs, metrics, extra


if ENV_ID not in gym.registry:
    gym.register(id=ENV_ID, entry_point="slicebench.core.services.slicing_env:SlicingEnv")
