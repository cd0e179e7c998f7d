from __future__ import annotations

from ..errors import DomainError, StateError
from .rollout import as_rng


class ReplayBuffer:
    """Fixed-capacity FIFO store of transitions in arrival order."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise DomainError("capacity must be >= 1")
        self.capacity = capacity
        self._items = [None] * capacity
        self._cursor = 0  # next write slot
        self._size = 0

    def __len__(self):
        return self._size

    def add(self, transition):
        self._items[self._cursor] = transition
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def extend(self, transitions):
        for t in transitions:
            self.add(t)

    def at(self, i: int):
        """``i``-th stored transition counting from the oldest."""
        if not 0 <= i < self._size:
            raise IndexError(i)
        oldest = (self._cursor - self._size) % self.capacity
        return self._items[(oldest + i) % self.capacity]

    def sample_segments(self, count: int, length: int, seed=None) -> list:
        """``count`` runs of up to ``length`` consecutive transitions.

        Each run starts at a uniformly chosen transition and stops after the
        first terminal transition or at the newest one.
        """
        if self._size == 0:
            raise StateError("cannot sample from an empty buffer")
        rng = as_rng(seed)
        segments = []
        for start in rng.integers(0, self._size, size=count):
            seg = []
            for i in range(int(start), min(int(start) + length, self._size)):
                t = self.at(i)
                seg.append(t)
                if t.terminal:
                    break
            segments.append(seg)
        return segments


def replay_sample(buffer: ReplayBuffer, batch_size: int, seed=None) -> list:
    """Uniform sample without replacement; deterministic per seed."""
    if batch_size > len(buffer):
        raise StateError(f"buffer holds {len(buffer)} transitions, {batch_size} requested")
    rng = as_rng(seed)
    return [buffer.at(int(i)) for i in rng.choice(len(buffer), size=batch_size, replace=False)]
