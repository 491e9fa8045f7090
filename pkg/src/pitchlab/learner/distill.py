"""Adaptive KL regularisation toward frozen teacher policies."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..diffnet import PolicyNetwork, gaussian_kl, load_psnap
from ..diffnet.tensor import Tensor, as_tensor, no_grad
from ..errors import SnapshotLoadError

# which batch states a teacher is compared on: proprio[1] is the body tilt
STATE_FILTERS = ("all", "fallen", "upright")


@dataclass
class Teacher:
    name: str
    params: object  # ParameterSet, never mutated
    network: PolicyNetwork
    coef: float = 1.0
    return_threshold: float = 0.5
    states: str = "all"

    def outputs(self, obs: dict, starts) -> tuple[np.ndarray, np.ndarray]:
        """Teacher (mean, std) over a (T, B) observation batch, from a zero state."""
        B = obs["proprio"].shape[1]
        with no_grad():
            P = self.params.tensors(requires_grad=False)
            mean, std, _, _ = self.network.sequence(P, obs, self.network.zero_state(B), starts)
        return mean.data, std.data


@dataclass
class TeacherSet:
    teachers: list = field(default_factory=list)

    def __len__(self):
        return len(self.teachers)

    def __iter__(self):
        return iter(self.teachers)

    @property
    def coefficients(self) -> list:
        return [t.coef for t in self.teachers]


def load_teacher(path, name=None, network_config=None, coef=1.0, threshold=0.5, states="all") -> Teacher:
    path = Path(path)
    if not path.is_file():
        raise SnapshotLoadError(f"missing teacher snapshot: {path}")
    params, meta = load_psnap(path)
    obs = meta.get("observation", "vision")
    from ..config import NetworkConfig

    cfg = network_config or NetworkConfig()
    if "network" in meta:
        cfg = replace(cfg, **{k: (tuple(v) if isinstance(v, list) else v) for k, v in meta["network"].items() if hasattr(cfg, k)})
    if states not in STATE_FILTERS:
        raise ValueError(f"unknown teacher state filter {states!r}")
    return Teacher(name or path.stem, params, PolicyNetwork(cfg, obs), coef, threshold, states)


def state_mask(proprio, states: str, tilt_threshold: float) -> np.ndarray:
    tilt = np.abs(np.asarray(proprio)[..., 1])
    if states == "fallen":
        return tilt > tilt_threshold
    if states == "upright":
        return tilt <= tilt_threshold
    return np.ones(tilt.shape, dtype=bool)


def distill_regularizer(mean_new, std_new, teacher_outputs, teachers: TeacherSet, masks=None):
    """sum_j lambda_j * E_s[KL(pi_new || pi_teacher_j)] over the masked states.

    ``teacher_outputs`` is a list of (mean, std) arrays aligned with
    ``teachers``.  Returns (penalty tensor, per-teacher KL floats).
    """
    mean_new, std_new = as_tensor(mean_new), as_tensor(std_new)
    dt = mean_new.dtype
    penalty = Tensor(np.zeros((), dtype=dt))
    kls = []
    for j, (t, (tm, ts)) in enumerate(zip(teachers, teacher_outputs)):
        kl = gaussian_kl(mean_new, std_new, np.asarray(tm, dt), np.asarray(ts, dt))
        if masks is not None:
            m = np.asarray(masks[j], dtype=dt)
            denom = max(float(m.sum()), 1.0)
            term = (kl * m).sum() * (1.0 / denom)
        else:
            term = kl.mean()
        kls.append(float(term.data))
        if t.coef > 0:
            penalty = penalty + t.coef * term
    return penalty, kls


def adapt_coefficients(teachers: TeacherSet, running_return: float | None, decay: float) -> TeacherSet:
    """Multiplicative decay for every teacher whose return threshold is exceeded; never increases."""
    if running_return is None or not np.isfinite(running_return):
        return teachers
    out = []
    for t in teachers:
        coef = t.coef * decay if running_return > t.return_threshold else t.coef
        out.append(replace(t, coef=coef))
    return TeacherSet(out)
