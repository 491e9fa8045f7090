"""Egocentric raycast camera.

Columns are equiangular: every column is one ray, ``fov / width`` radians
apart.  Rows above ``horizon_row`` use the same angular pitch; rows below it
are stretched so the bottom edge looks ``floor_fov_deg`` down, which keeps a
ball at the agent's feet in view.  Per column the ray is cast to
the pitch boundary; rows above the boundary show the scene panorama, rows
on the boundary show the bumper wall or a goal mouth, rows below show the
floor.  The ball and the opponent are then composited as screen-space discs,
far to near.
"""

from __future__ import annotations

import functools
import math

import numpy as np

from ..config import RenderConfig, SimConfig
from ..sim import WorldState, wrap_angle
from .scenes import SceneVariant

FRAME_SHAPE = (30, 40, 3)


@functools.lru_cache(maxsize=16)
def _geometry(config: RenderConfig):
    rho = math.radians(config.fov_deg) / config.width
    col_offsets = (config.width / 2 - (np.arange(config.width) + 0.5)) * rho
    below = math.radians(config.floor_fov_deg) / (config.height - config.horizon_row)
    y = np.arange(config.height) + 0.5 - config.horizon_row
    row_elev = np.where(y < 0, -y * rho, -y * below)
    return rho, below, col_offsets, row_elev


def elevation_to_row(elev: float, config: RenderConfig) -> float:
    rho, below = _geometry(config)[:2]
    return config.horizon_row - elev / (rho if elev > 0 else below)


def _ray_box(p, u, half_l, half_w):
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(u[:, 0] > 0, (half_l - p[0]) / u[:, 0], np.where(u[:, 0] < 0, (-half_l - p[0]) / u[:, 0], np.inf))
        ty = np.where(u[:, 1] > 0, (half_w - p[1]) / u[:, 1], np.where(u[:, 1] < 0, (-half_w - p[1]) / u[:, 1], np.inf))
    dist = np.maximum(np.minimum(tx, ty), 1e-3)
    return dist, tx <= ty


def _floor_colors(points, scene: SceneVariant, sim: SimConfig):
    x, y = points[..., 0], points[..., 1]
    half_l, half_w = sim.length / 2, sim.width / 2
    lw = 0.025
    line = (
        (np.abs(x) < lw)
        | (np.abs(np.hypot(x, y) - 0.6) < lw)
        | (np.abs(x) > half_l - 2 * lw)
        | (np.abs(y) > half_w - 2 * lw)
        | ((np.abs(np.abs(x) - (half_l - 0.6)) < lw) & (np.abs(y) < 1.0))
        | ((np.abs(y) - 1.0 < lw) & (np.abs(y) > 1.0 - lw) & (np.abs(x) > half_l - 0.6))
    )
    floor = np.asarray(scene.palette.floor, dtype=float)
    line_c = np.asarray(scene.palette.line, dtype=float)
    return np.where(line[..., None], line_c, floor)


def _composite_background(world: WorldState, agent_id: int, scene: SceneVariant, config: RenderConfig, sim: SimConfig):
    rho, _, col_offsets, row_elev = _geometry(config)
    me = world.agents[agent_id]
    p = me.position
    az = round(wrap_angle(me.heading + me.head_pan), 12)
    angles = az + col_offsets
    u = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    dist, hits_end = _ray_box(p, u, sim.length / 2, sim.width / 2)
    hit = p[None, :] + dist[:, None] * u
    in_mouth = hits_end & (np.abs(hit[:, 1]) < sim.goal_width / 2)
    wall_h = np.where(in_mouth, config.goal_height, config.wall_height)
    top = np.arctan((wall_h - config.camera_height) / dist)
    bottom = np.arctan(-config.camera_height / dist)

    attack_sign = 1.0 if agent_id == 0 else -1.0
    is_target = in_mouth & (np.sign(hit[:, 0]) == attack_sign)
    wall_c = np.asarray(scene.palette.wall, dtype=float)
    wall = np.where(
        in_mouth[:, None],
        np.where(is_target[:, None], np.asarray(scene.palette.target_goal, float), np.asarray(scene.palette.own_goal, float)),
        wall_c * np.clip(1.0 - 0.06 * dist, 0.6, 1.0)[:, None],
    )

    elev = row_elev[:, None]
    img = np.empty((config.height, config.width, 3))
    pano = scene.background
    ph, pw, _ = pano.shape
    pano_cols = np.floor((np.mod(angles, 2 * math.pi) / (2 * math.pi)) * pw).astype(int) % pw
    pano_rows = np.minimum((np.arange(config.height) * ph) // config.height, ph - 1)
    img[:] = pano[pano_rows[:, None], pano_cols[None, :]]

    light = scene.light_scale
    wall_mask = (elev <= top[None, :]) & (elev >= bottom[None, :])
    img = np.where(wall_mask[..., None], wall[None, :, :] * light, img)

    floor_mask = elev < bottom[None, :]
    below = row_elev < 0
    if np.any(below):
        d_floor = np.full(config.height, np.inf)
        d_floor[below] = config.camera_height / np.tan(-row_elev[below])
        d_floor = np.minimum(d_floor, 1e3)
        pts = p[None, None, :] + d_floor[:, None, None] * u[None, :, :]
        floor = _floor_colors(pts, scene, sim) * np.clip(1.0 - 0.04 * d_floor, 0.7, 1.0)[:, None, None]
        img = np.where(floor_mask[..., None], floor * light, img)
    return img, az


def _draw_disc(img, config: RenderConfig, az, cam_pos, obj_pos, center_h, radius, color):
    rho = _geometry(config)[0]
    rel = np.asarray(obj_pos) - cam_pos
    dist = math.hypot(rel[0], rel[1])
    if dist < 1e-6:
        return
    height, width = img.shape[:2]
    phi = wrap_angle(math.atan2(rel[1], rel[0]) - az)
    ang_r = math.asin(min(1.0, radius / dist))
    if abs(phi) - ang_r > width * rho / 2:
        return
    xc = width / 2 - phi / rho
    yc = elevation_to_row(math.atan2(center_h - config.camera_height, dist), config)
    r_px = max(ang_r / rho, 0.71)
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5
    mask = (xs[None, :] - xc) ** 2 + (ys[:, None] - yc) ** 2 <= r_px * r_px
    img[mask] = color


def _objects(world: WorldState, agent_id: int, config: RenderConfig):
    """(distance, position, centre height, radius, color) for drawable objects."""
    me = world.agents[agent_id]
    opp = world.agents[1 - agent_id]
    bp = world.ball_params
    half_h = config.opponent_height / 2
    objs = [
        (world.ball_position, bp.radius, bp.radius, np.asarray(bp.color, float)),
        (opp.position, half_h, half_h, np.asarray(config.opponent_color, float)),
    ]
    out = []
    for pos, ch, r, color in objs:
        d = float(np.hypot(*(np.asarray(pos) - me.position)))
        out.append((d, pos, ch, r, color))
    out.sort(key=lambda t: -t[0])
    return out


def render_egocentric(
    world: WorldState,
    agent_id: int,
    scene: SceneVariant,
    config: RenderConfig | None = None,
    sim: SimConfig | None = None,
    objects: bool = True,
) -> np.ndarray:
    """40x30 RGB uint8 frame from ``agent_id``'s head camera."""
    config = config or RenderConfig()
    sim = sim or SimConfig()
    img, az = _composite_background(world, agent_id, scene, config, sim)
    if objects:
        cam = world.agents[agent_id].position
        for _, pos, ch, r, color in _objects(world, agent_id, config):
            _draw_disc(img, config, az, cam, pos, ch, r, color * scene.light_scale)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def render_background(world, agent_id, scene, config=None, sim=None) -> np.ndarray:
    return render_egocentric(world, agent_id, scene, config, sim, objects=False)


def gaze_error(world: WorldState, agent_id: int) -> float:
    """Angle in [0, pi] between the camera axis and the bearing to the ball."""
    me = world.agents[agent_id]
    rel = world.ball_position - me.position
    bearing = math.atan2(rel[1], rel[0])
    return abs(wrap_angle(bearing - (me.heading + me.head_pan)))


def ball_visible(world: WorldState, agent_id: int, config: RenderConfig | None = None) -> bool:
    """Ball centre inside the horizontal field of view and not hidden behind the opponent."""
    config = config or RenderConfig()
    if gaze_error(world, agent_id) > math.radians(config.fov_deg) / 2:
        return False
    me, opp = world.agents[agent_id], world.agents[1 - agent_id]
    rel_b = world.ball_position - me.position
    rel_o = opp.position - me.position
    d_b, d_o = math.hypot(*rel_b), math.hypot(*rel_o)
    if d_o >= d_b or d_o < 1e-6:
        return True
    sep = abs(wrap_angle(math.atan2(rel_b[1], rel_b[0]) - math.atan2(rel_o[1], rel_o[0])))
    return sep > math.asin(min(1.0, (config.opponent_height / 2) / d_o))
