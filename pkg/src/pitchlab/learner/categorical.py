"""Categorical return distributions on a fixed, evenly spaced atom support."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LearnerConfigError


@dataclass(frozen=True)
class CategoricalValueDistribution:
    support: np.ndarray  # (A,) strictly increasing, evenly spaced
    probs: np.ndarray  # (..., A)

    def __post_init__(self):
        check_support(self.support)
        if self.probs.shape[-1] != self.support.shape[0]:
            raise LearnerConfigError("probability vector length differs from support size")

    def mean(self) -> np.ndarray:
        return self.probs @ self.support


def make_support(v_min: float, v_max: float, num_atoms: int) -> np.ndarray:
    if num_atoms < 2 or not v_max > v_min:
        raise LearnerConfigError(f"invalid support [{v_min}, {v_max}] with {num_atoms} atoms")
    return np.linspace(v_min, v_max, num_atoms)


def check_support(support) -> np.ndarray:
    z = np.asarray(support, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise LearnerConfigError("support must be a 1-d array of at least two atoms")
    d = z[1:] - z[:-1]
    if d.min() <= 0 or np.abs(d - d[0]).max() > 1e-12 + 1e-9 * abs(d[0]):
        raise LearnerConfigError("support must be strictly increasing and evenly spaced")
    return z


def project_categorical(rewards, probs, gamma_eff, support, target_support=None) -> np.ndarray:
    """Project ``r + gamma_eff * Z`` back onto ``support``.

    ``rewards`` (N,), ``probs`` (N, A) over ``support``, ``gamma_eff`` scalar
    or (N,).  Each shifted atom splits its mass linearly between the two
    neighbouring support atoms; atoms beyond the ends clamp to the boundary.
    """
    z = check_support(support)
    if target_support is not None:
        zt = check_support(target_support)
        if zt.shape != z.shape or not np.allclose(zt, z):
            raise LearnerConfigError("bootstrap and target supports differ")
    probs = np.asarray(probs, dtype=float)
    squeeze = probs.ndim == 1
    probs = np.atleast_2d(probs)
    n, a = probs.shape
    if a != z.size:
        raise LearnerConfigError(f"probabilities have {a} atoms, support has {z.size}")
    r = np.broadcast_to(np.asarray(rewards, dtype=float), (n,))
    g = np.broadcast_to(np.asarray(gamma_eff, dtype=float), (n,))
    if not np.isfinite(r.sum() + g.sum() + probs.sum()):
        from ..errors import LearnerFault

        raise LearnerFault("non-finite input to the categorical projection")
    v_min, v_max = z[0], z[-1]
    dz = (v_max - v_min) / (a - 1)
    tz = np.clip(r[:, None] + g[:, None] * z[None, :], v_min, v_max)
    b = (tz - v_min) / dz
    lo = np.clip(np.floor(b), 0, a - 1).astype(np.int64)
    hi = np.clip(np.ceil(b), 0, a - 1).astype(np.int64)
    w_hi = b - lo
    w_lo = 1.0 - w_hi
    rows = np.arange(n)[:, None] * a
    out = np.bincount((rows + lo).ravel(), (probs * w_lo).ravel(), minlength=n * a)
    out += np.bincount((rows + hi).ravel(), (probs * w_hi).ravel(), minlength=n * a)
    out = out.reshape(n, a)
    return out[0] if squeeze else out


def categorical_cross_entropy(target_probs, log_probs):
    """Mean over rows of ``-sum target * log_probs`` (log_probs may be a Tensor)."""
    return -(log_probs * target_probs).sum(axis=-1).mean()
