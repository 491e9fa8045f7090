"""Egocentric rendering, colour calibration and visual randomisation."""

from ..sim import BallParams
from .augment import AugmentConfig, FrameAugmenter, apply_photometric, augment, hue_rotation_matrix, randomize_ball
from .calibration import (
    CalibrationStats,
    ColorCalibrator,
    WebcamModel,
    calibrate_colors,
    fit_calibration,
    frame_stats,
    rotation_recording,
    scene_calibration,
)
from .camera import FRAME_SHAPE, ball_visible, gaze_error, render_background, render_egocentric
from .scenes import (
    PALETTES,
    SceneVariant,
    bake_scene_assets,
    load_scene_variants,
    read_panorama,
    sample_scene,
    write_panorama,
)

__all__ = [
    "AugmentConfig",
    "BallParams",
    "CalibrationStats",
    "ColorCalibrator",
    "FRAME_SHAPE",
    "FrameAugmenter",
    "PALETTES",
    "SceneVariant",
    "WebcamModel",
    "apply_photometric",
    "augment",
    "bake_scene_assets",
    "ball_visible",
    "calibrate_colors",
    "fit_calibration",
    "frame_stats",
    "gaze_error",
    "hue_rotation_matrix",
    "load_scene_variants",
    "randomize_ball",
    "read_panorama",
    "render_background",
    "render_egocentric",
    "rotation_recording",
    "sample_scene",
    "scene_calibration",
    "write_panorama",
]
