"""Photometric image perturbations and ball appearance randomisation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state

from ..sim import BallParams

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AugmentConfig:
    """Symmetric ranges: brightness offset in pixel units, contrast and
    saturation as relative factors around 1, hue rotation in radians."""

    brightness: float = 25.5
    contrast: float = 0.1
    saturation: float = 0.1
    hue: float = 0.1

    @classmethod
    def from_render_config(cls, rc) -> "AugmentConfig":
        return cls(rc.augment_brightness, rc.augment_contrast, rc.augment_saturation, rc.augment_hue)


def hue_rotation_matrix(angle: float) -> np.ndarray:
    """Rotation by ``angle`` about the grey axis (1, 1, 1)/sqrt(3)."""
    c, s = math.cos(angle), math.sin(angle)
    k = np.full((3, 3), (1.0 - c) / 3.0)
    k[np.diag_indices(3)] += c
    t = s / math.sqrt(3.0)
    k += np.array([[0, -t, t], [t, 0, -t], [-t, t, 0]])
    return k


def apply_photometric(frame, brightness=0.0, contrast=1.0, saturation=1.0, hue=0.0) -> np.ndarray:
    """Deterministic perturbation; float64 output, clipped to [0, 255]."""
    x = np.asarray(frame, dtype=float)
    if brightness:
        x = x + brightness
    if contrast != 1.0:
        m = x.mean()
        x = m + contrast * (x - m)
    if saturation != 1.0:
        gray = (x @ LUMA)[..., None]
        x = gray + saturation * (x - gray)
    if hue:
        x = x @ hue_rotation_matrix(hue).T
    return np.clip(x, 0.0, 255.0)


def augment(frame, rng: np.random.Generator, params: AugmentConfig) -> np.ndarray:
    """Random brightness/contrast/saturation/hue; preserves dtype (uint8 is rounded)."""
    b = rng.uniform(-params.brightness, params.brightness) if params.brightness else 0.0
    c = 1.0 + rng.uniform(-params.contrast, params.contrast) if params.contrast else 1.0
    s = 1.0 + rng.uniform(-params.saturation, params.saturation) if params.saturation else 1.0
    h = rng.uniform(-params.hue, params.hue) if params.hue else 0.0
    out = apply_photometric(frame, b, c, s, h)
    if np.asarray(frame).dtype == np.uint8:
        return np.rint(out).astype(np.uint8)
    return out


class FrameAugmenter(TransformerMixin, BaseEstimator):
    """Stateless transformer wrapper around :func:`augment` (one draw per frame)."""

    def __init__(self, brightness=25.5, contrast=0.1, saturation=0.1, hue=0.1, random_state=None):
        self.brightness = brightness
        self.contrast = contrast
        self.saturation = saturation
        self.hue = hue
        self.random_state = random_state

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        rng = np.random.default_rng(check_random_state(self.random_state).randint(2**31))
        params = AugmentConfig(self.brightness, self.contrast, self.saturation, self.hue)
        X = np.asarray(X)
        if X.ndim == 3:
            return augment(X, rng, params)
        return np.stack([augment(f, rng, params) for f in X])


def randomize_ball(rng: np.random.Generator, base: BallParams, low: float = 0.8, high: float = 1.2) -> BallParams:
    """Independent uniform scale in [low, high] for each colour channel, the radius and the mass."""
    s = rng.uniform(low, high, size=5) if high > low else np.full(5, low)
    color = tuple(float(np.clip(c * k, 0, 255)) for c, k in zip(base.color, s[:3]))
    return BallParams(color, base.radius * s[3], base.mass * s[4])
