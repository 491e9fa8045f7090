"""Online/offline batch mixing and the actor/learner ratio gate."""

from __future__ import annotations

import math
import threading
import time

import numpy as np

from ..errors import ReplayUnderflowError
from .slices import stack_slices


def resolve_mix_ratio(mix_ratio: float, offline) -> float:
    """Negative means "default": 0.5 with offline data, 0 without."""
    if mix_ratio is None or mix_ratio < 0:
        return 0.5 if offline else 0.0
    if mix_ratio > 1:
        raise ValueError(f"mix ratio must lie in [0, 1], got {mix_ratio}")
    return float(mix_ratio)


def batch_split(mix_ratio: float, batch_size: int) -> tuple[int, int]:
    """(offline, online) slice counts: ceil(mix * batch) offline."""
    n_off = min(batch_size, math.ceil(mix_ratio * batch_size - 1e-12))
    return n_off, batch_size - n_off


def sample_offline_indices(offline, n: int, rng) -> list:
    """(file index, record index) pairs, uniform over all offline records."""
    sizes = np.array([len(d) for d in offline], dtype=np.int64)
    total = int(sizes.sum()) if sizes.size else 0
    if n and total == 0:
        raise ReplayUnderflowError("offline share requested but no offline records are available")
    flat = rng.integers(0, total, size=n) if n else np.zeros(0, np.int64)
    edges = np.cumsum(sizes)
    files = np.searchsorted(edges, flat, side="right")
    starts = np.concatenate([[0], edges[:-1]]) if sizes.size else np.zeros(0, np.int64)
    return [(int(f), int(i - starts[f])) for f, i in zip(files, flat)]


def sample_slices(online, offline, mix_ratio: float, batch_size: int, rng) -> list:
    """Offline draws first, then online draws; deterministic given rng and contents."""
    offline = list(offline or [])
    n_off, n_on = batch_split(mix_ratio, batch_size)
    picks = sample_offline_indices(offline, n_off, rng)
    out = [offline[f][i] for f, i in picks]
    if n_on:
        if online is None or len(online) == 0:
            raise ReplayUnderflowError("online share requested but the replay buffer is empty")
        out.extend(online.sample(rng, n_on))
    return out


def sample_batch(online, offline, mix_ratio: float, batch_size: int, rng) -> dict:
    """Stacked (B, L, ...) batch with ceil(mix * B) offline slices."""
    return stack_slices(sample_slices(online, offline, mix_ratio, batch_size, rng))


def ratio_gate(env_steps: int, learner_steps: int, target_ratio: float = 16.0) -> bool:
    """Learner may take a step iff env_steps / (learner_steps + 1) >= target_ratio."""
    return env_steps >= target_ratio * (learner_steps + 1)


class RatioGate:
    """Keeps env steps per learner update near ``target_ratio`` in both directions.

    The learner waits until ``ratio_gate`` permits a step.  Actors wait before
    inserting while the inserted steps are more than ``slack_steps`` ahead of
    what the next learner step needs, so a slow learner throttles the actors
    instead of letting the ratio drift upward.
    """

    def __init__(self, target_ratio: float = 16.0, slack_steps: float = 96.0):
        self.target_ratio = float(target_ratio)
        self.slack_steps = float(slack_steps)
        self.env_steps = 0
        self.learner_steps = 0
        self.closed = False
        self._cond = threading.Condition()

    def learner_permitted(self) -> bool:
        return ratio_gate(self.env_steps, self.learner_steps, self.target_ratio)

    def actor_permitted(self) -> bool:
        return self.env_steps < self.target_ratio * (self.learner_steps + 1) + self.slack_steps

    def wait_learner(self, timeout=None) -> bool:
        with self._cond:
            return self._cond.wait_for(lambda: self.closed or self.learner_permitted(), timeout) and not self.closed

    def wait_actor(self, timeout=None) -> bool:
        with self._cond:
            return self._cond.wait_for(lambda: self.closed or self.actor_permitted(), timeout) and not self.closed

    def record_insert(self, steps: int) -> None:
        with self._cond:
            self.env_steps += int(steps)
            self._cond.notify_all()

    def record_update(self) -> None:
        with self._cond:
            self.learner_steps += 1
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._cond.notify_all()

    def measured_ratio(self) -> float:
        return self.env_steps / max(self.learner_steps, 1)

    def state_dict(self) -> dict:
        return {"env_steps": self.env_steps, "learner_steps": self.learner_steps}

    def load_state_dict(self, s: dict) -> None:
        with self._cond:
            self.env_steps = int(s["env_steps"])
            self.learner_steps = int(s["learner_steps"])
            self._cond.notify_all()


def wait_until(pred, timeout: float, poll: float = 0.01) -> bool:
    end = time.monotonic() + timeout
    while time.monotonic() < end:
        if pred():
            return True
        time.sleep(poll)
    return pred()
