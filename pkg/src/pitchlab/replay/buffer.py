"""FIFO ring of trajectory slices with thread-safe counters."""

from __future__ import annotations

import threading

import numpy as np

from ..errors import ReplaySchemaError
from .slices import TrajectorySlice, schema_hash


class ReplayBuffer:
    """Fixed-capacity FIFO ring.

    Producers may ``append`` concurrently with one sampling consumer.  Slices
    are stored by reference; callers must not mutate a slice after appending.
    ``inserted`` counts every append ever made, ``sampled`` every slice handed
    out, and ``env_steps`` the environment steps they carried.
    """

    def __init__(self, capacity: int, length: int, lstm_width: int = 64):
        if capacity < 1:
            raise ValueError("replay capacity must be positive")
        self.capacity = int(capacity)
        self.length = int(length)
        self.lstm_width = int(lstm_width)
        self.schema = schema_hash(length, lstm_width)
        self._ring: list = [None] * self.capacity
        self._next = 0
        self._size = 0
        self._lock = threading.Lock()
        self.inserted = 0
        self.sampled = 0

    def __len__(self):
        return self._size

    @property
    def env_steps(self) -> int:
        return self.inserted * self.length

    def append(self, slc: TrajectorySlice) -> None:
        if not isinstance(slc, TrajectorySlice):
            raise ReplaySchemaError(f"expected a TrajectorySlice, got {type(slc).__name__}")
        slc.validate(self.length, self.lstm_width)
        with self._lock:
            self._ring[self._next] = slc
            self._next = (self._next + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)
            self.inserted += 1

    def _slot(self, i: int) -> int:
        # i-th oldest live slice
        return (self._next - self._size + i) % self.capacity

    def get(self, i: int) -> TrajectorySlice:
        with self._lock:
            if not 0 <= i < self._size:
                raise IndexError(i)
            return self._ring[self._slot(i)]

    def sample(self, rng: np.random.Generator, n: int) -> list:
        """``n`` slices uniformly with replacement (one lock hold, so no evicted slice leaks)."""
        with self._lock:
            if self._size == 0:
                from ..errors import ReplayUnderflowError

                raise ReplayUnderflowError("online replay buffer is empty")
            idx = rng.integers(0, self._size, size=n)
            out = [self._ring[self._slot(int(i))] for i in idx]
            self.sampled += n
        return out

    def snapshot(self) -> list:
        """Oldest-first copy of the live slice references."""
        with self._lock:
            return [self._ring[self._slot(i)] for i in range(self._size)]

    def counters(self) -> dict:
        with self._lock:
            return {"size": self._size, "inserted": self.inserted, "sampled": self.sampled, "env_steps": self.env_steps}
