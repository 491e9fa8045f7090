import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pitchlab.config import RenderConfig, SimConfig
from pitchlab.errors import AssetLoadError, CalibrationDataError
from pitchlab.render import (
    AugmentConfig,
    CalibrationStats,
    ColorCalibrator,
    FrameAugmenter,
    apply_photometric,
    augment,
    ball_visible,
    calibrate_colors,
    fit_calibration,
    gaze_error,
    hue_rotation_matrix,
    load_scene_variants,
    randomize_ball,
    read_panorama,
    render_background,
    render_egocentric,
    sample_scene,
    write_panorama,
)
from pitchlab.sim import BallParams, ScenarioKind, reset

SIM = SimConfig()
RC = RenderConfig()


def kick_world():
    w = reset(SIM, ScenarioKind.KICKING_POWER, 0)
    # ball exactly at kick range straight ahead
    w.ball_position = w.agents[0].position + np.array([SIM.kick_range, 0.0])
    return w


# -- camera --------------------------------------------------------------------


def test_frame_shape_and_dtype(scenes):
    f = render_egocentric(reset(SIM, ScenarioKind.FULL_GAME, 0), 0, scenes[0], RC, SIM)
    assert f.shape == (30, 40, 3) and f.dtype == np.uint8


def test_ball_at_kick_range(scenes):
    w = kick_world()
    ball = np.array(w.ball_params.color) * scenes[0].light_scale
    f = render_egocentric(w, 0, scenes[0], RC, SIM).astype(float)
    mask = np.all(np.abs(f - np.rint(ball)) < 1.0, axis=-1)
    cols = np.nonzero(mask.any(axis=0))[0]
    # pinhole oracle: angular diameter 2 asin(r/d) spread over fov/width radians per column
    rho = math.radians(70.0) / 40
    expect = 2 * math.asin(SIM.ball_radius / SIM.kick_range) / rho
    width = cols.max() - cols.min() + 1
    assert width >= 40 / 3
    assert abs(width - expect) <= 2
    assert abs((cols.min() + cols.max() + 1) / 2 - 20) <= 0.5


def test_head_pan_shift(scenes):
    w = reset(SIM, ScenarioKind.FULL_GAME, 2)
    base = render_background(w, 0, scenes[1], RC, SIM).astype(int)
    w.agents[0].head_pan = 0.5
    panned = render_background(w, 0, scenes[1], RC, SIM).astype(int)
    shift = 0.5 / math.radians(70.0) * 40
    # compare the panorama rows only (pure function of azimuth)
    best = min(
        range(0, 40),
        key=lambda s: np.abs(panned[:3, s:] - base[:3, : 40 - s]).mean() if s < 37 else np.inf,
    )
    assert abs(best - shift) <= 1.0


def test_no_objects_equals_background(scenes):
    w = reset(SIM, ScenarioKind.FULL_GAME, 5)
    # look away from everything: put ball and opponent behind the camera
    me = w.agents[0]
    back = -me.forward
    w.ball_position = me.position + 0.5 * back
    w.agents[1].position = me.position + 1.0 * back
    np.testing.assert_array_equal(
        render_egocentric(w, 0, scenes[0], RC, SIM), render_background(w, 0, scenes[0], RC, SIM)
    )


def test_occlusion_nearer_wins(scenes):
    w = reset(SIM, ScenarioKind.KICKING_POWER, 0)
    me = w.agents[0]
    w.agents[1].position = me.position + np.array([0.8, 0.0])
    w.ball_position = me.position + np.array([1.6, 0.0])
    f = render_egocentric(w, 0, scenes[0], RC, SIM)
    opp = np.rint(np.array(RC.opponent_color) * scenes[0].light_scale)
    # column 20 crosses both; the opponent disc covers the centre pixel
    col = f[:, 20].astype(float)
    ball = np.rint(np.array(w.ball_params.color) * scenes[0].light_scale)
    assert not np.any(np.all(np.abs(col - ball) < 1, axis=-1))
    assert np.any(np.all(np.abs(col - opp) < 1, axis=-1))
    w.agents[1].position, w.ball_position = w.ball_position.copy(), w.agents[1].position.copy()
    f2 = render_egocentric(w, 0, scenes[0], RC, SIM).astype(float)
    assert np.any(np.all(np.abs(f2[:, 20] - ball) < 1, axis=-1))


@settings(max_examples=25, deadline=None)
@given(st.floats(-math.pi, math.pi), st.integers(0, 3))
def test_full_rotation_consistency(theta, sid):
    scenes = load_scene_variants()
    w = reset(SIM, ScenarioKind.FULL_GAME, 1)
    w.agents[0].heading = theta
    a = render_egocentric(w, 0, scenes[sid], RC, SIM)
    w.agents[0].heading = theta + 2 * math.pi
    b = render_egocentric(w, 0, scenes[sid], RC, SIM)
    assert np.array_equal(a, b)


def test_render_deterministic(scenes):
    w = reset(SIM, ScenarioKind.FULL_GAME, 9)
    assert np.array_equal(render_egocentric(w, 1, scenes[2], RC, SIM), render_egocentric(w, 1, scenes[2], RC, SIM))


def test_floor_rows_below_goal_colours(scenes):
    w = reset(SIM, ScenarioKind.WALKING_SPEED, 0)
    w.ball_position = np.array([-2.0, 1.5])  # out of view
    f = render_egocentric(w, 0, scenes[0], RC, SIM).astype(float)
    blue = np.array(scenes[0].palette.target_goal) * scenes[0].light_scale
    rows = np.nonzero(np.all(np.abs(f - np.rint(blue)) < 1, axis=-1).any(axis=1))[0]
    assert rows.size and rows.max() < 20
    floor = np.array(scenes[0].palette.floor)
    assert np.all(np.abs(f[-1].mean(axis=0) - floor) < 60)


def test_gaze_error_oracle():
    rng = np.random.default_rng(0)
    for seed in range(200):
        w = reset(SIM, ScenarioKind.FULL_GAME, seed)
        w.agents[0].head_pan = rng.uniform(-2.5, 2.5)
        me = w.agents[0]
        d = w.ball_position - me.position
        gaze = np.array([math.cos(me.heading + me.head_pan), math.sin(me.heading + me.head_pan)])
        u = d / np.linalg.norm(d)
        oracle = math.atan2(abs(gaze[0] * u[1] - gaze[1] * u[0]), float(gaze @ u))
        assert abs(gaze_error(w, 0) - oracle) < 1e-9
        assert 0 <= gaze_error(w, 0) <= math.pi


def test_ball_visible():
    w = kick_world()
    assert ball_visible(w, 0)
    w.agents[0].head_pan = 2.0
    assert not ball_visible(w, 0)


# -- scenes --------------------------------------------------------------------


def test_four_variants_seamless(scenes):
    assert [s.id for s in scenes] == [0, 1, 2, 3]
    for s in scenes:
        bg = s.background.astype(int)
        edge = np.abs(bg[:, 0] - bg[:, -1]).mean()
        inner = np.abs(np.diff(bg, axis=1)).mean()
        assert edge <= 4 * inner + 3


def test_panorama_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, size=(7, 11, 3), dtype=np.uint8)
    p = tmp_path / "x.pano"
    write_panorama(p, img)
    raw = p.read_bytes()
    assert raw[:4] == b"PANO"
    assert np.array_equal(read_panorama(p), img)
    p.write_bytes(raw[:-1])
    with pytest.raises(AssetLoadError):
        read_panorama(p)


def test_missing_variant(tmp_path):
    with pytest.raises(AssetLoadError):
        load_scene_variants(tmp_path)


def test_scene_frequency(scenes):
    rng = np.random.default_rng(0)
    counts = np.bincount([sample_scene(rng, scenes).id for _ in range(100_000)], minlength=4)
    assert np.all(np.abs(counts / 1e5 - 0.25) <= 0.01)
    assert all(sample_scene(rng, scenes[2:3]).id == 2 for _ in range(50))
    a = sample_scene(np.random.default_rng(5), scenes).id
    assert a == sample_scene(np.random.default_rng(5), scenes).id


# -- calibration ---------------------------------------------------------------


def test_stats_examples():
    const = np.full((4, 2, 3, 3), 42.0)
    s, _ = fit_calibration(const, const)
    assert np.all(s.mean == 42) and np.all(s.std == 0)
    two = np.stack([np.zeros((2, 3, 3)), np.full((2, 3, 3), 255.0)])
    s, s2 = fit_calibration(two, two)
    assert np.all(s.mean == 127.5) and np.all(s.std == 127.5)
    assert np.array_equal(s.mean, s2.mean) and np.array_equal(s.std, s2.std)
    with pytest.raises(CalibrationDataError):
        fit_calibration(np.zeros((0, 2, 3, 3)), two)


def stats(m, s, shape=(1, 1, 1)):
    return CalibrationStats(np.full(shape, float(m)), np.full(shape, float(s)))


def test_calibrate_scalar():
    out = calibrate_colors(np.full((1, 1, 1), 110.0), stats(100, 10), stats(120, 20))
    assert out[0, 0, 0] == 140.0
    assert calibrate_colors(np.full((1, 1, 1), 250.0), stats(100, 10), stats(200, 20))[0, 0, 0] == 255.0
    assert calibrate_colors(np.full((1, 1, 1), 7.0), stats(100, 0), stats(33, 20))[0, 0, 0] == 33.0


def test_calibrate_identity(rng):
    m = rng.uniform(50, 200, (30, 40, 3))
    s = rng.uniform(1, 20, (30, 40, 3))
    st_ = CalibrationStats(m, s)
    x = rng.uniform(0, 255, (30, 40, 3))
    np.testing.assert_allclose(calibrate_colors(x, st_, st_), x, atol=1e-9)


def test_calibrate_shape_mismatch():
    with pytest.raises(CalibrationDataError):
        calibrate_colors(np.zeros((2, 2, 3)), stats(0, 1, (3, 2, 3)), stats(0, 1, (3, 2, 3)))


def test_calibration_moment_matching():
    rng = np.random.default_rng(3)
    shape = (30, 40, 3)
    mu_n, sd_n = rng.uniform(80, 170, shape), rng.uniform(5, 20, shape)
    mu_r, sd_r = rng.uniform(80, 170, shape), rng.uniform(5, 20, shape)
    frames = rng.normal(mu_n, sd_n, size=(1000, *shape))
    emp = CalibrationStats(frames.mean(0), frames.std(0))
    target = CalibrationStats(mu_r, sd_r)
    out = calibrate_colors(frames, emp, target)
    clipped = np.any((out <= 0) | (out >= 255), axis=0)
    ok = ~clipped
    assert ok.mean() > 0.9
    np.testing.assert_allclose(out.mean(0)[ok], mu_r[ok], rtol=1e-3)
    np.testing.assert_allclose(out.var(0)[ok], sd_r[ok] ** 2, rtol=1e-3)


def test_stats_file_round_trip(tmp_path, rng):
    s = CalibrationStats(rng.uniform(0, 255, (3, 4, 3)).astype(np.float32).astype(float), rng.uniform(0, 9, (3, 4, 3)).astype(np.float32).astype(float))
    p = tmp_path / "c.cals"
    s.save(p)
    assert p.read_bytes()[:4] == b"CALS"
    t = CalibrationStats.load(p)
    assert np.array_equal(t.mean, s.mean) and np.array_equal(t.std, s.std)


def test_calibrator_estimator(rng):
    X = rng.uniform(0, 255, (20, 30, 40, 3))
    y = np.clip(X * 0.9 + 10, 0, 255)
    cal = ColorCalibrator().fit(X, y)
    np.testing.assert_allclose(cal.transform(X), y, atol=1e-6)
    assert ColorCalibrator(quantize=True).fit(X, y).transform(X[0]).dtype == np.uint8


# -- augmentation --------------------------------------------------------------


def test_augment_zero_identity(rng):
    f = rng.integers(0, 256, (30, 40, 3), dtype=np.uint8)
    assert np.array_equal(augment(f, rng, AugmentConfig(0, 0, 0, 0)), f)


def test_brightness_additive():
    f = np.full((30, 40, 3), 128.0)
    np.testing.assert_allclose(apply_photometric(f, brightness=10.0), 138.0)


def test_saturation_zero_is_gray(rng):
    f = rng.uniform(0, 255, (30, 40, 3))
    g = apply_photometric(f, saturation=0.0)
    luma = 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]
    for c in range(3):
        np.testing.assert_allclose(g[..., c], luma, atol=1e-9)


def test_hue_rotation_properties():
    R = hue_rotation_matrix(0.7)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(R @ np.ones(3), np.ones(3), atol=1e-12)
    np.testing.assert_allclose(hue_rotation_matrix(2 * math.pi / 3) @ [1, 0, 0], [0, 1, 0], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_augment_bounds(seed):
    rng = np.random.default_rng(seed)
    f = rng.integers(0, 256, (30, 40, 3), dtype=np.uint8)
    out = augment(f, rng, AugmentConfig(60, 0.5, 0.5, 1.0))
    assert out.shape == f.shape and out.dtype == np.uint8
    fl = augment(f.astype(float), rng, AugmentConfig(60, 0.5, 0.5, 1.0))
    assert fl.min() >= 0 and fl.max() <= 255


def test_frame_augmenter_estimator(rng):
    X = rng.integers(0, 256, (5, 30, 40, 3), dtype=np.uint8)
    out = FrameAugmenter(random_state=0).fit_transform(X)
    assert out.shape == X.shape
    assert np.array_equal(out, FrameAugmenter(random_state=0).fit_transform(X))


# -- ball randomisation --------------------------------------------------------


def test_randomize_ball_bounds():
    base = BallParams.from_config(SIM)
    rng = np.random.default_rng(0)
    draws = [randomize_ball(rng, base) for _ in range(100_000)]
    scales = np.array([[*(np.array(d.color) / base.color), d.radius / base.radius, d.mass / base.mass] for d in draws])
    eps = 1e-3
    assert np.all(scales >= 0.8 - 1e-12) and np.all(scales <= 1.2 + 1e-12)
    assert np.all(scales.min(0) <= 0.8 + eps) and np.all(scales.max(0) >= 1.2 - eps)


def test_randomize_ball_degenerate_and_seeded():
    base = BallParams.from_config(SIM)
    assert randomize_ball(np.random.default_rng(0), base, 1.0, 1.0) == base
    assert randomize_ball(np.random.default_rng(4), base) == randomize_ball(np.random.default_rng(4), base)
