"""Uniform and prioritized experience replay with a sharded front end."""

import logging
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from slicebench.core.domain.enums import BufferAssignment, PriorityTransform
from slicebench.core.domain.exceptions import InsufficientDataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Transition:
    """One environment step as stored in replay."""

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class SampledBatch:
    """A minibatch plus the bookkeeping needed to update its priorities."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    indices: np.ndarray
    generations: np.ndarray
    weights: np.ndarray
    shard: int = 0

    def __len__(self) -> int:
        return len(self.indices)


class LinearSchedule:
    """Linear interpolation from start to end over a horizon, then constant."""

    def __init__(self, start: float, end: float, horizon: int):
        self.start = start
        self.end = end
        self.horizon = max(int(horizon), 1)

    def value(self, t: int) -> float:
        fraction = min(max(t, 0) / self.horizon, 1.0)
        return self.start + fraction * (self.end - self.start)


class SumTree:
    """Binary sum tree over a power-of-two leaf array.

    Parents are recomputed from their children on every update so the root
    never accumulates floating-point drift.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("sum tree capacity must be positive")
        self.capacity = capacity
        self._leaves = 1
        while self._leaves < capacity:
            self._leaves *= 2
        self._tree = np.zeros(2 * self._leaves, dtype=np.float64)

    @property
    def total(self) -> float:
        return float(self._tree[1])

    def get(self, indices: np.ndarray) -> np.ndarray:
        return self._tree[np.asarray(indices) + self._leaves]

    def update(self, indices: np.ndarray, values: np.ndarray) -> None:
        """Set leaf values and refresh their ancestors."""
        nodes = np.asarray(indices, dtype=np.int64) + self._leaves
        self._tree[nodes] = values
        nodes = np.unique(nodes // 2)
        while nodes[0] >= 1:
            self._tree[nodes] = self._tree[2 * nodes] + self._tree[2 * nodes + 1]
            if nodes[0] == 1:
                break
            nodes = np.unique(nodes // 2)

    def find(self, values: np.ndarray, limit: int) -> np.ndarray:
        """Leaf indices whose cumulative-sum interval contains each value.

        Args:
            values: Prefix-sum targets in [0, total)
            limit: Number of live leaves; results are clipped below it

        Returns:
            Leaf indices
        """
        values = np.array(values, dtype=np.float64)
        nodes = np.ones(values.shape, dtype=np.int64)
        while nodes[0] < self._leaves:
            left = 2 * nodes
            left_sum = self._tree[left]
            go_right = values >= left_sum
            values = np.where(go_right, values - left_sum, values)
            nodes = np.where(go_right, left + 1, left)
        return np.minimum(nodes - self._leaves, limit - 1)


class _RingStorage:
    """Column-wise ring storage with per-slot generation counters."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.size = 0
        self.cursor = 0
        self.pushed = 0
        self._columns: Optional[dict[str, np.ndarray]] = None
        self.generations = np.full(capacity, -1, dtype=np.int64)

    def _allocate(self, t: Transition) -> None:
        state_dim = np.asarray(t.state).shape[0]
        action_dim = np.asarray(t.action).shape[0]
        self._columns = {
            "states": np.zeros((self.capacity, state_dim)),
            "actions": np.zeros((self.capacity, action_dim)),
            "rewards": np.zeros(self.capacity),
            "next_states": np.zeros((self.capacity, state_dim)),
            "dones": np.zeros(self.capacity),
        }

    def write(self, t: Transition) -> int:
        if self._columns is None:
            self._allocate(t)
        slot = self.cursor
        cols = self._columns
        cols["states"][slot] = t.state
        cols["actions"][slot] = t.action
        cols["rewards"][slot] = t.reward
        cols["next_states"][slot] = t.next_state
        cols["dones"][slot] = float(t.done)
        self.generations[slot] = self.pushed
        self.pushed += 1
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return slot

    def gather(self, indices: np.ndarray, weights: np.ndarray, shard: int = 0) -> SampledBatch:
        cols = self._columns
        return SampledBatch(
            states=cols["states"][indices].copy(),
            actions=cols["actions"][indices].copy(),
            rewards=cols["rewards"][indices].copy(),
            next_states=cols["next_states"][indices].copy(),
            dones=cols["dones"][indices].copy(),
            indices=indices,
            generations=self.generations[indices].copy(),
            weights=weights,
            shard=shard,
        )


class UniformReplayBuffer:
    """Uniform replay used by the TD3 and DDPG baselines."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        self._storage = _RingStorage(capacity)
        self._rng = rng
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self._storage.size

    @property
    def capacity(self) -> int:
        return self._storage.capacity

    @property
    def pushed(self) -> int:
        return self._storage.pushed

    def push(self, t: Transition) -> None:
        with self._lock:
            self._storage.write(t)

    def sample(self, batch: int, beta: float = 1.0) -> SampledBatch:
        with self._lock:
            if self._storage.size < batch:
                raise InsufficientDataError(
                    f"buffer holds {self._storage.size} transitions, {batch} requested"
                )
            indices = self._rng.integers(0, self._storage.size, size=batch)
            return self._storage.gather(indices, np.ones(batch))

    def update_priorities(
        self,
        indices: np.ndarray,
        losses: np.ndarray,
        generations: Optional[np.ndarray] = None,
    ) -> None:
        """Uniform replay ignores priorities."""

    def reprioritize(self, batch: SampledBatch, losses: np.ndarray) -> None:
        """Uniform replay ignores priorities."""


class PrioritizedReplayBuffer:
    """Proportional prioritized replay keyed on per-transition loss.

    Args:
        capacity: Ring size
        rng: Sampling generator
        alpha: Priority exponent
        priority_floor: Added to every transformed loss
        transform: Loss-to-priority mapping
    """

    def __init__(
        self,
        capacity: int,
        rng: np.random.Generator,
        alpha: float = 0.6,
        priority_floor: float = 1e-6,
        transform: PriorityTransform = PriorityTransform.ABS,
    ):
        self._storage = _RingStorage(capacity)
        self._tree = SumTree(capacity)
        self._rng = rng
        self.alpha = alpha
        self.priority_floor = priority_floor
        self.transform = PriorityTransform(transform)
        self.max_priority = 1.0
        self.stale_updates = 0
        self._priorities = np.zeros(capacity, dtype=np.float64)
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self._storage.size

    @property
    def capacity(self) -> int:
        return self._storage.capacity

    @property
    def pushed(self) -> int:
        return self._storage.pushed

    @property
    def tree_total(self) -> float:
        return self._tree.total

    def priorities(self, indices: Sequence[int]) -> np.ndarray:
        """Raw (un-exponentiated) priorities of the given slots."""
        return self._priorities[np.asarray(indices)].copy()

    def push(self, t: Transition) -> None:
        """Store a transition with the current maximum priority."""
        with self._lock:
            slot = self._storage.write(t)
            self._set_priority(np.array([slot]), np.array([self.max_priority]))

    def _set_priority(self, slots: np.ndarray, values: np.ndarray) -> None:
        self._priorities[slots] = values
        self._tree.update(slots, values**self.alpha)

    def sample(self, batch: int, beta: float) -> SampledBatch:
        """Draw a batch with probability proportional to priority^alpha.

        Args:
            batch: Batch size
            beta: Importance-sampling exponent

        Returns:
            Batch with importance weights normalized by their maximum

        Raises:
            InsufficientDataError: If fewer than batch transitions are stored
        """
        with self._lock:
            size = self._storage.size
            if size < batch:
                raise InsufficientDataError(f"buffer holds {size} transitions, {batch} requested")
            total = self._tree.total
            targets = self._rng.uniform(0.0, total, size=batch)
            indices = self._tree.find(targets, size)
            probs = self._tree.get(indices) / total
            weights = (size * probs) ** (-beta)
            weights = weights / weights.max()
            return self._storage.gather(indices, weights)

    def update_priorities(
        self,
        indices: np.ndarray,
        losses: np.ndarray,
        generations: Optional[np.ndarray] = None,
    ) -> None:
        """Set priority transform(|loss|) + floor for still-live slots.

        Slots overwritten since sampling (generation mismatch) are skipped and
        counted in stale_updates.
        """
        indices = np.asarray(indices, dtype=np.int64)
        losses = np.abs(np.asarray(losses, dtype=np.float64))
        if self.transform is PriorityTransform.SQRT:
            losses = np.sqrt(losses)
        values = losses + self.priority_floor

        with self._lock:
            live = np.ones(len(indices), dtype=bool)
            if generations is not None:
                live = self._storage.generations[indices] == np.asarray(generations)
            stale = int((~live).sum())
            if stale:
                self.stale_updates += stale
                logger.debug(f"Skipped {stale} stale priority update(s)")
            if not live.any():
                return
            # Duplicate indices keep their last value
            self._set_priority(indices[live], values[live])
            self.max_priority = max(self.max_priority, float(values[live].max()))

    def reprioritize(self, batch: SampledBatch, losses: np.ndarray) -> None:
        """Update priorities of a batch this buffer produced."""
        self.update_priorities(batch.indices, losses, batch.generations)


class ShardedReplay:
    """Several replay shards behind one push/sample interface."""

    def __init__(
        self,
        shards: Sequence,
        rng: np.random.Generator,
        assignment: BufferAssignment = BufferAssignment.ROUND_ROBIN,
    ):
        if not shards:
            raise ValueError("at least one replay shard is required")
        self.shards = list(shards)
        self.assignment = BufferAssignment(assignment)
        self._rng = rng
        self._next = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return sum(len(s) for s in self.shards)

    @property
    def pushed(self) -> int:
        return sum(s.pushed for s in self.shards)

    @property
    def stale_updates(self) -> int:
        return sum(getattr(s, "stale_updates", 0) for s in self.shards)

    def _pick_push_shard(self) -> int:
        with self._lock:
            if self.assignment is BufferAssignment.RANDOM:
                return int(self._rng.integers(len(self.shards)))
            shard = self._next
            self._next = (self._next + 1) % len(self.shards)
            return shard

    def push(self, t: Transition) -> int:
        """Store a transition in the next shard; returns the shard id."""
        shard = self._pick_push_shard()
        self.shards[shard].push(t)
        return shard

    def sample(self, batch: int, beta: float = 1.0) -> SampledBatch:
        """Sample from one shard chosen uniformly among those holding a full batch."""
        ready = [i for i, s in enumerate(self.shards) if len(s) >= batch]
        if not ready:
            raise InsufficientDataError(f"no replay shard holds {batch} transitions yet")
        with self._lock:
            shard = ready[int(self._rng.integers(len(ready)))]
        sampled = self.shards[shard].sample(batch, beta)
        sampled.shard = shard
        return sampled

    def update_priorities(
        self,
        indices: np.ndarray,
        losses: np.ndarray,
        generations: Optional[np.ndarray] = None,
        shard: int = 0,
    ) -> None:
        self.shards[shard].update_priorities(indices, losses, generations)

    def reprioritize(self, batch: SampledBatch, losses: np.ndarray) -> None:
        """Route a priority update to the shard that produced the batch."""
        self.shards[batch.shard].update_priorities(batch.indices, losses, batch.generations)
