"""Per-pixel colour calibration between a rendered and a camera image domain.

Both domains are summarised by per-pixel, per-channel mean and standard
deviation over a recording (population statistics).  A rendered pixel is
mapped onto the camera domain by the affine transform that matches those
moments, followed by clipping to [0, 255].
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..errors import CalibrationDataError

STATS_MAGIC = b"CALS"
STATS_VERSION = 1
_STATS_HEADER = struct.Struct("<4sHIII")


@dataclass(frozen=True)
class CalibrationStats:
    mean: np.ndarray  # (H, W, C) float64
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape:
            raise CalibrationDataError("mean/std shape mismatch")
        if np.any(self.std < 0):
            raise CalibrationDataError("negative standard deviation")

    @property
    def shape(self):
        return self.mean.shape

    def save(self, path) -> None:
        """Header, then per channel: float32 mean plane followed by float32 std plane."""
        h, w, c = self.shape
        with open(path, "wb") as fh:
            fh.write(_STATS_HEADER.pack(STATS_MAGIC, STATS_VERSION, h, w, c))
            for ch in range(c):
                fh.write(np.ascontiguousarray(self.mean[..., ch], dtype="<f4").tobytes())
                fh.write(np.ascontiguousarray(self.std[..., ch], dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "CalibrationStats":
        blob = Path(path).read_bytes()
        if len(blob) < _STATS_HEADER.size:
            raise CalibrationDataError(f"truncated calibration file: {path}")
        magic, version, h, w, c = _STATS_HEADER.unpack_from(blob)
        if magic != STATS_MAGIC or version != STATS_VERSION:
            raise CalibrationDataError(f"not a calibration stats file: {path}")
        plane = h * w * 4
        if len(blob) != _STATS_HEADER.size + 2 * c * plane:
            raise CalibrationDataError(f"calibration payload size mismatch: {path}")
        mean = np.empty((h, w, c))
        std = np.empty((h, w, c))
        off = _STATS_HEADER.size
        for ch in range(c):
            mean[..., ch] = np.frombuffer(blob, "<f4", h * w, off).reshape(h, w)
            off += plane
            std[..., ch] = np.frombuffer(blob, "<f4", h * w, off).reshape(h, w)
            off += plane
        return cls(mean, std)


def _as_stack(frames, name) -> np.ndarray:
    arr = np.asarray(frames, dtype=float)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[0] == 0:
        raise CalibrationDataError(f"{name} must be a non-empty sequence of HxWxC frames")
    return arr


def frame_stats(frames) -> CalibrationStats:
    arr = _as_stack(frames, "frames")
    return CalibrationStats(arr.mean(axis=0), arr.std(axis=0))


def fit_calibration(frames_a, frames_b) -> tuple[CalibrationStats, CalibrationStats]:
    """Per-pixel statistics of two recordings (e.g. rendered and camera)."""
    a = _as_stack(frames_a, "frames_a")
    b = _as_stack(frames_b, "frames_b")
    if a.shape[1:] != b.shape[1:]:
        raise CalibrationDataError(f"frame shapes differ: {a.shape[1:]} vs {b.shape[1:]}")
    return frame_stats(a), frame_stats(b)


def calibrate_colors(frame, nerf_stats: CalibrationStats, real_stats: CalibrationStats) -> np.ndarray:
    """``clip(std_real/std_nerf * (x - mean_nerf) + mean_real, 0, 255)`` per pixel.

    Returns float64 values; pixels with zero rendered spread map to the camera
    mean.  Accepts a single frame or a stack of frames.
    """
    x = np.asarray(frame, dtype=float)
    if nerf_stats.shape != real_stats.shape or x.shape[-3:] != nerf_stats.shape:
        raise CalibrationDataError(
            f"shape mismatch: frame {x.shape[-3:]}, stats {nerf_stats.shape}/{real_stats.shape}"
        )
    flat = nerf_stats.std == 0
    safe = np.where(flat, 1.0, nerf_stats.std)
    out = real_stats.std / safe * (x - nerf_stats.mean) + real_stats.mean
    out = np.where(flat, real_stats.mean, out)
    return np.clip(out, 0.0, 255.0)


class ColorCalibrator(TransformerMixin, BaseEstimator):
    """Moment-matching colour transform as a scikit-learn transformer.

    ``fit(X, y)`` takes rendered frames ``X`` and camera frames ``y`` (any
    number of each, same frame shape); ``transform`` maps rendered frames into
    the camera domain.
    """

    def __init__(self, quantize=False):
        self.quantize = quantize

    def fit(self, X, y=None):
        if y is None:
            raise CalibrationDataError("ColorCalibrator.fit needs camera frames as y")
        self.nerf_stats_, self.real_stats_ = fit_calibration(X, y)
        return self

    def transform(self, X):
        check_is_fitted(self, "nerf_stats_")
        out = calibrate_colors(X, self.nerf_stats_, self.real_stats_)
        if self.quantize:
            return np.rint(out).astype(np.uint8)
        return out


class WebcamModel:
    """Deterministic stand-in for the onboard camera's colour response.

    Channel gains, a gamma curve and radial vignetting: the kind of
    systematic difference calibration is meant to remove.
    """

    def __init__(self, gains=(1.08, 0.97, 0.86), gamma=0.9, vignette=0.25, offset=6.0):
        self.gains = np.asarray(gains, dtype=float)
        self.gamma = gamma
        self.vignette = vignette
        self.offset = offset

    def __call__(self, frames) -> np.ndarray:
        x = np.asarray(frames, dtype=float)
        h, w = x.shape[-3], x.shape[-2]
        yy, xx = np.mgrid[0:h, 0:w]
        r2 = ((xx + 0.5) / w - 0.5) ** 2 + ((yy + 0.5) / h - 0.5) ** 2
        vig = 1.0 - self.vignette * r2 / 0.5
        y = 255.0 * (x / 255.0) ** self.gamma * self.gains * vig[..., None] + self.offset
        return np.clip(np.rint(y), 0, 255).astype(np.uint8)


def rotation_recording(scene, render_config=None, sim_config=None, n_frames: int = 120) -> np.ndarray:
    """Background frames from the pitch centre over one full turn."""
    from ..config import RenderConfig, SimConfig
    from ..sim import ScenarioKind, reset
    from .camera import render_background

    render_config = render_config or RenderConfig()
    sim_config = sim_config or SimConfig()
    world = reset(sim_config, ScenarioKind.FULL_GAME, 0)
    frames = []
    for k in range(n_frames):
        w = world.copy()
        w.agents[0].position = np.zeros(2)
        w.agents[0].heading = 2 * math.pi * k / n_frames - math.pi
        w.agents[0].head_pan = 0.0
        frames.append(render_background(w, 0, scene, render_config, sim_config))
    return np.stack(frames)


def scene_calibration(scene, render_config=None, sim_config=None, camera=None, n_frames: int = 120):
    """Fit rendered-vs-camera statistics for one scene variant."""
    camera = camera or WebcamModel()
    rendered = rotation_recording(scene, render_config, sim_config, n_frames)
    return fit_calibration(rendered, camera(rendered))
