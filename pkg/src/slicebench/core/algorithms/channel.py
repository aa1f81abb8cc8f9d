"""Channel realizations, regularized beamforming, SINR and achievable rate."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from slicebench.core.domain.exceptions import DegenerateChannelError, InvalidTopologyError

logger = logging.getLogger(__name__)

DISTANCE_FLOOR = 1.0
NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class Topology:
    """AP and user placement in a square deployment area."""

    n_aps: int
    n_users: int
    area_side: float
    ap_positions: np.ndarray
    user_positions: np.ndarray
    pathloss_exponent: float
    reference_gain: float

    def __post_init__(self):
        if self.n_aps < 1 or self.n_users < 1:
            raise InvalidTopologyError("topology needs at least one AP and one user")
        if self.pathloss_exponent < 0 or self.reference_gain <= 0:
            raise InvalidTopologyError(
                "pathloss exponent must be non-negative and reference gain positive"
            )
        if self.ap_positions.shape != (self.n_aps, 2):
            raise InvalidTopologyError(f"ap_positions must have shape ({self.n_aps}, 2)")
        if self.user_positions.shape != (self.n_users, 2):
            raise InvalidTopologyError(f"user_positions must have shape ({self.n_users}, 2)")
        for positions in (self.ap_positions, self.user_positions):
            if np.any(positions < 0) or np.any(positions > self.area_side):
                raise InvalidTopologyError("positions must lie inside the deployment square")

    @classmethod
    def random(
        cls,
        n_aps: int,
        n_users: int,
        area_side: float,
        pathloss_exponent: float,
        reference_gain: float,
        rng: np.random.Generator,
    ) -> "Topology":
        """Place APs and users uniformly at random.

        Args:
            n_aps: Number of APs N
            n_users: Number of users M
            area_side: Square side in meters
            pathloss_exponent: Log-distance exponent
            reference_gain: Gain at the 1 m floor
            rng: Caller-owned generator

        Returns:
            New topology
        """
        return cls(
            n_aps=n_aps,
            n_users=n_users,
            area_side=area_side,
            ap_positions=rng.uniform(0.0, area_side, size=(n_aps, 2)),
            user_positions=rng.uniform(0.0, area_side, size=(n_users, 2)),
            pathloss_exponent=pathloss_exponent,
            reference_gain=reference_gain,
        )

    def distances(self) -> np.ndarray:
        """AP-user distances (N x M), floored at 1 m."""
        diff = self.ap_positions[:, None, :] - self.user_positions[None, :, :]
        return np.maximum(np.linalg.norm(diff, axis=-1), DISTANCE_FLOOR)

    def large_scale_gains(self) -> np.ndarray:
        """Log-distance power gains beta (N x M)."""
        return self.reference_gain * self.distances() ** (-self.pathloss_exponent)


@dataclass(frozen=True)
class ChannelMatrix:
    """Complex N x M channel; column m is h_m."""

    gains: np.ndarray

    @property
    def n_aps(self) -> int:
        return self.gains.shape[0]

    @property
    def n_users(self) -> int:
        return self.gains.shape[1]

    def select(self, users: np.ndarray) -> "ChannelMatrix":
        """Restrict to a subset of user columns."""
        return ChannelMatrix(self.gains[:, users])


@dataclass(frozen=True)
class BeamformingMatrix:
    """Complex N x M beamformers with per-user powers."""

    vectors: np.ndarray
    powers: np.ndarray


@dataclass(frozen=True)
class RadioParams:
    """Noise levels and modulation gap."""

    regularizer_noise: float
    receiver_noise: float
    snr_gap: float

    def __post_init__(self):
        if min(self.regularizer_noise, self.receiver_noise) <= 0 or self.snr_gap < 1:
            raise ValueError("noise variances must be positive and snr_gap >= 1")


def generate_channel(topology: Topology, rng: np.random.Generator) -> ChannelMatrix:
    """Draw i.i.d. Rayleigh fading scaled by log-distance gains.

    Args:
        topology: AP/user geometry
        rng: Caller-owned generator

    Returns:
        Channel realization h_{n,m} = sqrt(beta_{n,m}) * g
    """
    shape = (topology.n_aps, topology.n_users)
    small_scale = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return ChannelMatrix(np.sqrt(topology.large_scale_gains()) * small_scale)


def regularized_matrix(h: ChannelMatrix, params: RadioParams) -> np.ndarray:
    """A = I_N + (1/sigma_hat^2) sum_j h_j h_j^H (Hermitian positive-definite)."""
    gains = h.gains
    return np.eye(h.n_aps, dtype=np.complex128) + (gains @ gains.conj().T) / params.regularizer_noise


def rzf_beamformer(h: ChannelMatrix, params: RadioParams, powers: np.ndarray) -> BeamformingMatrix:
    """Regularized zero-forcing beamformers scaled to the requested powers.

    A is factorized once per channel realization and shared across users.

    Args:
        h: Channel matrix
        params: Radio parameters
        powers: Per-user powers p_m >= 0 (W)

    Returns:
        Beamforming matrix with squared column norms equal to powers

    Raises:
        DegenerateChannelError: If some A^-1 h_m has vanishing norm
    """
    powers = np.asarray(powers, dtype=np.float64)
    if powers.shape != (h.n_users,):
        raise ValueError(f"expected {h.n_users} powers, got shape {powers.shape}")
    if np.any(powers < 0):
        raise ValueError("beamforming powers must be non-negative")

    factor = linalg.cho_factor(regularized_matrix(h, params), lower=True)
    directions = linalg.cho_solve(factor, h.gains)
    norms = np.linalg.norm(directions, axis=0)
    degenerate = np.flatnonzero(norms < NORM_FLOOR)
    if degenerate.size:
        raise DegenerateChannelError(f"zero channel column(s) for user(s) {degenerate.tolist()}")

    vectors = directions / norms * np.sqrt(powers)
    return BeamformingMatrix(vectors=vectors, powers=powers.copy())


def sinr(h: ChannelMatrix, v: BeamformingMatrix, params: RadioParams) -> np.ndarray:
    """Per-user signal-to-interference-plus-noise ratio.

    Args:
        h: Channel matrix
        v: Beamformers for the same users
        params: Radio parameters

    Returns:
        SINR_m = |h_m^H v_m|^2 / (sum_{j != m} |h_m^H v_j|^2 + sigma^2)
    """
    if h.gains.shape != v.vectors.shape:
        raise ValueError(f"channel {h.gains.shape} and beamformer {v.vectors.shape} disagree")
    # cross[m, j] = |h_m^H v_j|^2
    cross = np.abs(h.gains.conj().T @ v.vectors) ** 2
    signal = np.diag(cross)
    interference = cross.sum(axis=1) - signal
    return signal / (np.maximum(interference, 0.0) + params.receiver_noise)


def achievable_rate(sinr_values: np.ndarray, params: RadioParams) -> np.ndarray:
    """Achievable rate log2(1 + SINR / gap) in bits/s/Hz."""
    sinr_values = np.asarray(sinr_values, dtype=np.float64)
    if np.any(sinr_values < 0):
        raise ValueError("SINR must be non-negative")
    return np.log2(1.0 + sinr_values / params.snr_gap)
