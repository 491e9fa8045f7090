"""Fixed-length trajectory slices and the field schema shared by replay and learner.

A slice holds ``length`` consecutive steps of one actor.  Step ``t`` records
the observation before acting, the normalised (pre-clamp) action sampled by
the behaviour policy, the reward and discount that followed it, and the
behaviour distribution.  ``discount[t]`` is 0 when the episode ended after
step ``t``; ``start[t]`` marks the first step of an episode, so a slice may
span episode boundaries.  The policy's recurrent state is stored once, at
slice start.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..errors import ReplaySchemaError
from ..sim import ACTION_DIM, PRIVILEGED_DIM, PROPRIO_DIM

FRAME_SHAPE = (30, 40, 3)
TRUTH_DIM = 7  # self xy, self heading, ball xy, opponent xy
REWARD_DIM = 4

# name -> (per-step shape, dtype); per-slice fields are listed separately
STEP_FIELDS = {
    "frame": (FRAME_SHAPE, np.uint8),
    "proprio": ((PROPRIO_DIM,), np.float32),
    "privileged": ((PRIVILEGED_DIM,), np.float32),
    "action": ((ACTION_DIM,), np.float32),
    "reward": ((), np.float32),
    "reward_components": ((REWARD_DIM,), np.float32),
    "discount": ((), np.float32),
    "behavior_logp": ((), np.float32),
    "behavior_mean": ((ACTION_DIM,), np.float32),
    "behavior_std": ((ACTION_DIM,), np.float32),
    "start": ((), np.bool_),
    "truth": ((TRUTH_DIM,), np.float32),
}


def slice_fields(length: int, lstm_width: int) -> dict:
    """Full field schema: name -> (array shape, dtype)."""
    out = {k: ((length, *shape), dt) for k, (shape, dt) in STEP_FIELDS.items()}
    out["h0"] = ((lstm_width,), np.float32)
    out["c0"] = ((lstm_width,), np.float32)
    return out


def schema_hash(length: int, lstm_width: int) -> int:
    """64-bit digest of the field layout; datasets only mix when it matches."""
    desc = ";".join(f"{k}:{s}:{np.dtype(d).str}" for k, (s, d) in slice_fields(length, lstm_width).items())
    return int.from_bytes(hashlib.sha256(desc.encode()).digest()[:8], "little")


@dataclass
class TrajectorySlice:
    arrays: dict

    @property
    def length(self) -> int:
        return int(self.arrays["reward"].shape[0])

    @property
    def lstm_width(self) -> int:
        return int(self.arrays["h0"].shape[0])

    def validate(self, length: int, lstm_width: int) -> "TrajectorySlice":
        want = slice_fields(length, lstm_width)
        if set(self.arrays) != set(want):
            missing = sorted(set(want) - set(self.arrays))
            extra = sorted(set(self.arrays) - set(want))
            raise ReplaySchemaError(f"slice fields differ: missing {missing}, unexpected {extra}")
        for k, (shape, dt) in want.items():
            a = self.arrays[k]
            if a.shape != shape or a.dtype != np.dtype(dt):
                raise ReplaySchemaError(f"field {k}: expected {shape} {np.dtype(dt)}, got {a.shape} {a.dtype}")
        return self

    def equal(self, other: "TrajectorySlice") -> bool:
        return self.arrays.keys() == other.arrays.keys() and all(
            np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays
        )


def empty_slice(length: int, lstm_width: int) -> TrajectorySlice:
    return TrajectorySlice({k: np.zeros(s, dtype=d) for k, (s, d) in slice_fields(length, lstm_width).items()})


def random_slice(rng: np.random.Generator, length: int, lstm_width: int = 64) -> TrajectorySlice:
    """Schema-valid slice with random content (tests, synthetic batches)."""
    arrays = {}
    for k, (shape, dt) in slice_fields(length, lstm_width).items():
        if dt is np.uint8:
            arrays[k] = rng.integers(0, 256, size=shape, dtype=np.uint8)
        elif dt is np.bool_:
            arrays[k] = rng.random(shape) < 0.02
        else:
            arrays[k] = rng.normal(size=shape).astype(np.float32)
    arrays["behavior_std"] = np.abs(arrays["behavior_std"]) + np.float32(0.1)
    arrays["discount"] = (rng.random(length) > 0.02).astype(np.float32)
    arrays["action"] = np.clip(arrays["action"], -1, 1)
    return TrajectorySlice(arrays)


def stack_slices(slices) -> dict:
    """List of slices -> dict of (B, L, ...) arrays (per-slice fields (B, ...))."""
    if not slices:
        raise ReplaySchemaError("cannot stack an empty list of slices")
    return {k: np.stack([s.arrays[k] for s in slices]) for k in slices[0].arrays}
