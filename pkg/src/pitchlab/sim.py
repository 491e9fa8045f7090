"""Two-player 2D soccer physics.

World frame: origin at the pitch centre, x along the pitch length, y across.
Agent 0 attacks the +x goal (drawn blue in its own camera), agent 1 attacks
-x.  Bodies are discs; each agent additionally carries a head-pan camera
joint and a single tilt ("fall") axis that must be actively balanced.

All public operations are pure: ``step`` returns a new ``WorldState`` and
never mutates its input.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np

from .config import SimConfig
from .errors import ScenarioError, SimulationFault

ACTION_FIELDS = (
    "target_forward_speed",
    "target_lateral_speed",
    "target_turn_rate",
    "head_pan_rate",
    "tilt_torque",
    "kick_strength",
)
ACTION_DIM = len(ACTION_FIELDS)
PROPRIO_DIM = 3 + ACTION_DIM
PRIVILEGED_DIM = 12
HALF_PI = math.pi / 2


class ScenarioKind(str, enum.Enum):
    FULL_GAME = "full_game"
    PENALTY = "penalty"
    WALKING_SPEED = "walking_speed"
    TURNING_SPEED = "turning_speed"
    KICKING_POWER = "kicking_power"
    GAZE_TRACKING = "gaze_tracking"

    @classmethod
    def parse(cls, value) -> "ScenarioKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("-", "_"))
        except ValueError:
            raise ScenarioError(f"unknown scenario: {value!r}") from None


@dataclass(frozen=True)
class PitchGeometry:
    length: float = 5.0
    width: float = 4.0
    goal_width: float = 1.6
    wall_restitution: float = 0.8

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ScenarioError("pitch dimensions must be positive")
        if not 0 < self.goal_width < self.width:
            raise ScenarioError("goal_width must lie in (0, width)")
        if not 0 <= self.wall_restitution <= 1:
            raise ScenarioError("wall_restitution must lie in [0, 1]")

    @classmethod
    def from_config(cls, config: SimConfig) -> "PitchGeometry":
        return cls(config.length, config.width, config.goal_width, config.wall_restitution)

    def target_goal(self, agent_id: int) -> np.ndarray:
        sign = 1.0 if agent_id == 0 else -1.0
        return np.array([sign * self.length / 2, 0.0])

    def own_goal(self, agent_id: int) -> np.ndarray:
        return self.target_goal(1 - agent_id)

    def to_world(self, rel) -> np.ndarray:
        """Relative pitch coordinates in [0, 1]^2 (agent 0's view) to metres."""
        rel = np.asarray(rel, dtype=float)
        return (rel - 0.5) * np.array([self.length, self.width])

    def to_relative(self, xy) -> np.ndarray:
        return np.asarray(xy, dtype=float) / np.array([self.length, self.width]) + 0.5


@dataclass(frozen=True)
class BallParams:
    color: tuple
    radius: float
    mass: float

    @classmethod
    def from_config(cls, config: SimConfig) -> "BallParams":
        return cls(tuple(float(c) for c in config.ball_color), config.ball_radius, config.ball_mass)


@dataclass(frozen=True)
class PhysicsParams:
    """Per-episode physical constants (the randomisable subset)."""

    wall_restitution: float
    ball_damping: float
    kick_impulse: float

    @classmethod
    def from_config(cls, config: SimConfig) -> "PhysicsParams":
        return cls(config.wall_restitution, config.ball_damping, config.kick_impulse)

    def scaled(self, rng: np.random.Generator, spread: float) -> "PhysicsParams":
        s = rng.uniform(1 - spread, 1 + spread, size=3)
        return PhysicsParams(
            min(1.0, self.wall_restitution * s[0]), self.ball_damping * s[1], self.kick_impulse * s[2]
        )


@dataclass(frozen=True)
class Action:
    target_forward_speed: float = 0.0
    target_lateral_speed: float = 0.0
    target_turn_rate: float = 0.0
    head_pan_rate: float = 0.0
    tilt_torque: float = 0.0
    kick_strength: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in ACTION_FIELDS], dtype=float)

    @classmethod
    def from_array(cls, values) -> "Action":
        values = np.asarray(values, dtype=float).reshape(ACTION_DIM)
        return cls(*(float(v) for v in values))

    @classmethod
    def from_normalized(cls, values, config: SimConfig) -> "Action":
        """Map a vector in [-1, 1]^6 onto the physical action box (clamping first)."""
        low, high = action_bounds(config)
        u = np.clip(np.asarray(values, dtype=float), -1.0, 1.0)
        return cls.from_array(low + (u + 1.0) * 0.5 * (high - low))

    def to_normalized(self, config: SimConfig) -> np.ndarray:
        low, high = action_bounds(config)
        return 2.0 * (self.as_array() - low) / (high - low) - 1.0

    def clamped(self, config: SimConfig) -> "Action":
        low, high = action_bounds(config)
        return Action.from_array(np.clip(self.as_array(), low, high))


ZERO_ACTION = Action()


def action_bounds(config: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    high = np.array(
        [
            config.max_forward_speed,
            config.max_lateral_speed,
            config.max_turn_rate,
            config.max_head_rate,
            1.0,
            1.0,
        ]
    )
    low = -high
    low[5] = 0.0
    return low, high


@dataclass
class AgentBody:
    position: np.ndarray
    heading: float
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    angular_velocity: float = 0.0
    head_pan: float = 0.0
    tilt: float = 0.0
    fallen: bool = False
    kick_cooldown: float = 0.0

    def copy(self) -> "AgentBody":
        return replace(self, position=self.position.copy(), linear_velocity=self.linear_velocity.copy())

    @property
    def forward(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])

    @property
    def camera_azimuth(self) -> float:
        return self.heading + self.head_pan


@dataclass
class WorldState:
    agents: list
    ball_position: np.ndarray
    ball_velocity: np.ndarray
    ball_params: BallParams
    physics: PhysicsParams
    time: float = 0.0
    score: tuple = (0, 0)
    rng_state: dict = field(default_factory=dict, repr=False)

    def copy(self) -> "WorldState":
        return replace(
            self,
            agents=[a.copy() for a in self.agents],
            ball_position=self.ball_position.copy(),
            ball_velocity=self.ball_velocity.copy(),
            rng_state=dict(self.rng_state),
        )

    def to_vector(self) -> np.ndarray:
        """Every dynamic quantity as one float vector (for hashing and equality)."""
        parts = [self.ball_position, self.ball_velocity, [self.time, *self.score]]
        for a in self.agents:
            parts.append(a.position)
            parts.append(a.linear_velocity)
            parts.append(
                [a.heading, a.angular_velocity, a.head_pan, a.tilt, float(a.fallen), a.kick_cooldown]
            )
        return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])


class Event(NamedTuple):
    kind: str  # "goal" | "kick" | "fall" | "wall_bounce"
    agent: int  # scorer / kicker / faller; -1 for ball-only events
    time: float
    value: float = 0.0


@dataclass(frozen=True)
class PrivilegedState:
    ball_position: np.ndarray
    ball_velocity: np.ndarray
    opponent_position: np.ndarray
    opponent_velocity: np.ndarray
    target_goal: np.ndarray
    own_goal: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate(
            [
                self.ball_position,
                self.ball_velocity,
                self.opponent_position,
                self.opponent_velocity,
                self.target_goal,
                self.own_goal,
            ]
        )


@dataclass(frozen=True)
class RewardComponents:
    scoring: float
    velocity_to_ball: float
    ball_to_goal_velocity: float
    upright: float
    total: float

    def as_array(self) -> np.ndarray:
        return np.array([self.scoring, self.velocity_to_ball, self.ball_to_goal_velocity, self.upright])


def reward_weights(config: SimConfig) -> np.ndarray:
    return np.array(
        [
            config.reward_scoring,
            config.reward_velocity_to_ball,
            config.reward_ball_to_goal,
            config.reward_upright,
        ]
    )


# -- reset ------------------------------------------------------------------


def _standing(position, heading) -> AgentBody:
    return AgentBody(position=np.asarray(position, dtype=float), heading=float(heading))


def _bearing(src, dst) -> float:
    d = np.asarray(dst) - np.asarray(src)
    return math.atan2(d[1], d[0])


def reset(
    config: SimConfig,
    scenario,
    seed: int,
    ball_params: BallParams | None = None,
    physics: PhysicsParams | None = None,
) -> WorldState:
    """Initial world for ``scenario``; identical arguments give identical states."""
    scenario = ScenarioKind.parse(scenario)
    pitch = PitchGeometry.from_config(config)
    rng = np.random.default_rng(seed)
    margin = config.agent_radius + 0.2
    half_l, half_w = pitch.length / 2, pitch.width / 2
    ball_pos = np.zeros(2)
    ball_vel = np.zeros(2)
    corner_opponent = pitch.to_world((0.9, 0.1))

    def in_half(sign):
        x = sign * rng.uniform(0.3, half_l - margin)
        y = rng.uniform(-half_w + margin, half_w - margin)
        return np.array([x, y])

    if scenario is ScenarioKind.FULL_GAME:
        agents = [
            _standing(in_half(-1), rng.uniform(-math.pi, math.pi)),
            _standing(in_half(+1), rng.uniform(-math.pi, math.pi)),
        ]
    elif scenario is ScenarioKind.PENALTY:
        shooter = _standing(in_half(-1), rng.uniform(-math.pi, math.pi))
        shooter.tilt = HALF_PI * (1.0 if rng.random() < 0.5 else -1.0)
        shooter.fallen = True
        keeper_pos = in_half(+1)
        agents = [shooter, _standing(keeper_pos, _bearing(keeper_pos, ball_pos))]
    elif scenario is ScenarioKind.WALKING_SPEED:
        agents = [_standing(pitch.to_world((0.1, 0.5)), 0.0), _standing(corner_opponent, math.pi)]
        ball_pos = pitch.to_world((0.7, 0.5))
    elif scenario is ScenarioKind.TURNING_SPEED:
        start = pitch.to_world((0.1, 0.1))
        ball_pos = pitch.to_world((0.9, 0.9))
        agents = [_standing(start, _bearing(start, ball_pos) + math.pi), _standing(corner_opponent, math.pi)]
    elif scenario is ScenarioKind.KICKING_POWER:
        start = pitch.to_world((0.4, 0.5))
        agents = [_standing(start, 0.0), _standing(corner_opponent, math.pi)]
        gap = config.agent_radius + config.ball_radius + 0.02
        ball_pos = start + np.array([gap, 0.0])
    else:  # GAZE_TRACKING
        start = pitch.to_world((0.3, 0.5))
        agents = [_standing(start, 0.0), _standing(corner_opponent, math.pi)]
        ball_pos = start + np.array([1.0, 0.0])
        speed = rng.uniform(0.0, 1.0)
        angle = rng.uniform(-math.pi, math.pi)
        ball_vel = speed * np.array([math.cos(angle), math.sin(angle)])

    for a in agents:
        a.heading = wrap_angle(a.heading)
    return WorldState(
        agents=agents,
        ball_position=np.asarray(ball_pos, dtype=float),
        ball_velocity=ball_vel,
        ball_params=ball_params or BallParams.from_config(config),
        physics=physics or PhysicsParams.from_config(config),
        rng_state=rng.bit_generator.state,
    )


# -- action filter ----------------------------------------------------------


def smooth_action(prev_u: Action, a: Action, config: SimConfig | None = None) -> Action:
    """Exponential action filter ``u = k*u_prev + (1-k)*a``, clamped to bounds."""
    config = config or SimConfig()
    k = config.action_smoothing
    u = k * prev_u.as_array() + (1.0 - k) * a.as_array()
    low, high = action_bounds(config)
    return Action.from_array(np.clip(u, low, high))


# -- step -------------------------------------------------------------------


def wrap_angle(theta: float) -> float:
    return (theta + math.pi) % (2 * math.pi) - math.pi


def _check_finite(world: WorldState, actions) -> None:
    for i, act in enumerate(actions):
        for name in ACTION_FIELDS:
            v = getattr(act, name)
            if not math.isfinite(v):
                raise SimulationFault(f"actions[{i}].{name}", v)
    if not np.all(np.isfinite(world.ball_position)):
        raise SimulationFault("ball_position", world.ball_position)
    if not np.all(np.isfinite(world.ball_velocity)):
        raise SimulationFault("ball_velocity", world.ball_velocity)
    for i, a in enumerate(world.agents):
        for f in fields(a):
            v = np.asarray(getattr(a, f.name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise SimulationFault(f"agents[{i}].{f.name}", getattr(a, f.name))


def _resolve_disc_pair(p1, v1, m1, p2, v2, m2, r_sum, restitution):
    """Impulse + positional correction for two overlapping discs.

    Returns the impulse magnitude applied to body 2 along the contact normal
    (0 when not touching or already separating).
    """
    d = p2 - p1
    dist = math.hypot(d[0], d[1])
    if dist >= r_sum:
        return 0.0, None
    n = d / dist if dist > 1e-12 else np.array([1.0, 0.0])
    inv1, inv2 = 1.0 / m1, 1.0 / m2
    overlap = r_sum - dist
    p1 -= n * overlap * inv1 / (inv1 + inv2)
    p2 += n * overlap * inv2 / (inv1 + inv2)
    vn = float(np.dot(v2 - v1, n))
    if vn >= 0.0:
        return 0.0, n
    j = -(1.0 + restitution) * vn / (inv1 + inv2)
    v1 -= j * inv1 * n
    v2 += j * inv2 * n
    return j, n


def step(world: WorldState, actions, config: SimConfig | None = None, dt: float | None = None):
    """Advance the world by ``dt`` (default 1/40 s). Returns ``(world', events)``.

    ``actions`` are the already-filtered commands for agents 0 and 1.
    """
    config = config or SimConfig()
    dt = config.dt if dt is None else dt
    _check_finite(world, actions)
    w = world.copy()
    events: list[Event] = []
    low, high = action_bounds(config)
    acts = [np.clip(a.as_array(), low, high) for a in actions]
    phys = w.physics
    half_l, half_w = config.length / 2, config.width / 2
    r_agent = config.agent_radius
    t_next = w.time + dt
    blend = min(1.0, dt / config.velocity_time_constant)

    for i, (agent, u) in enumerate(zip(w.agents, acts)):
        fwd, lat, turn, pan_rate, torque, _ = u
        agent.head_pan = float(np.clip(agent.head_pan + pan_rate * dt, -config.head_pan_limit, config.head_pan_limit))
        tilt_rate = config.tilt_drift * agent.tilt + config.tilt_torque_gain * torque
        agent.tilt = float(np.clip(agent.tilt + tilt_rate * dt, -HALF_PI, HALF_PI))
        was_fallen = agent.fallen
        agent.fallen = abs(agent.tilt) > config.tilt_fall_threshold
        if agent.fallen and not was_fallen:
            events.append(Event("fall", i, t_next))
        if agent.fallen:
            fwd = lat = turn = 0.0
        c, s = math.cos(agent.heading), math.sin(agent.heading)
        target_v = np.array([c * fwd - s * lat, s * fwd + c * lat])
        agent.linear_velocity += (target_v - agent.linear_velocity) * blend
        agent.angular_velocity += (turn - agent.angular_velocity) * blend
        agent.heading = wrap_angle(agent.heading + agent.angular_velocity * dt)
        agent.position += agent.linear_velocity * dt
        agent.kick_cooldown = max(0.0, agent.kick_cooldown - dt)

    w.ball_velocity *= math.exp(-phys.ball_damping * dt)
    prev_ball = w.ball_position.copy()
    w.ball_position += w.ball_velocity * dt

    for i, (agent, u) in enumerate(zip(w.agents, acts)):
        strength = u[5]
        if agent.fallen or agent.kick_cooldown > 0.0 or strength <= config.kick_threshold:
            continue
        d = w.ball_position - agent.position
        dist = math.hypot(d[0], d[1])
        if dist > config.kick_range:
            continue
        if dist > 1e-12 and np.dot(d / dist, agent.forward) < math.cos(config.kick_half_angle) - 1e-12:
            continue
        w.ball_velocity += agent.forward * strength * phys.kick_impulse / w.ball_params.mass
        agent.kick_cooldown = config.kick_cooldown
        agent.tilt = float(np.clip(agent.tilt - config.kick_recoil * strength, -HALF_PI, HALF_PI))
        events.append(Event("kick", i, t_next, float(strength)))

    a0, a1 = w.agents
    j, n = _resolve_disc_pair(
        a0.position, a0.linear_velocity, config.agent_mass,
        a1.position, a1.linear_velocity, config.agent_mass,
        2 * r_agent, config.agent_agent_restitution,
    )
    if j > 0.0:
        dv = j / config.agent_mass
        a0.tilt += config.collision_tilt_gain * dv * float(np.dot(-n, a0.forward))
        a1.tilt += config.collision_tilt_gain * dv * float(np.dot(n, a1.forward))
    for agent in w.agents:
        _resolve_disc_pair(
            agent.position, agent.linear_velocity, config.agent_mass,
            w.ball_position, w.ball_velocity, w.ball_params.mass,
            r_agent + w.ball_params.radius, config.ball_agent_restitution,
        )

    for i, agent in enumerate(w.agents):
        agent.tilt = float(np.clip(agent.tilt, -HALF_PI, HALF_PI))
        was_fallen = agent.fallen
        agent.fallen = abs(agent.tilt) > config.tilt_fall_threshold
        if agent.fallen and not was_fallen:
            events.append(Event("fall", i, t_next))
        for axis, half in ((0, half_l), (1, half_w)):
            lim = half - r_agent
            if agent.position[axis] > lim:
                agent.position[axis] = lim
                agent.linear_velocity[axis] = min(0.0, agent.linear_velocity[axis])
            elif agent.position[axis] < -lim:
                agent.position[axis] = -lim
                agent.linear_velocity[axis] = max(0.0, agent.linear_velocity[axis])

    speed = math.hypot(*w.ball_velocity)
    if speed > config.max_ball_speed:
        w.ball_velocity *= config.max_ball_speed / speed

    scorer = _ball_walls(w, prev_ball, config, events, t_next)
    if scorer is not None:
        score = list(w.score)
        score[scorer] += 1
        w.score = tuple(score)
        events.append(Event("goal", scorer, t_next))
        w.ball_position = np.zeros(2)
        w.ball_velocity = np.zeros(2)

    w.time = t_next
    return w, events


def _ball_walls(w: WorldState, prev, config: SimConfig, events, t) -> int | None:
    """Goal detection and wall reflection for the ball; returns the scorer id."""
    half_l, half_w = config.length / 2, config.width / 2
    r = w.ball_params.radius
    e = w.physics.wall_restitution
    p, v = w.ball_position, w.ball_velocity
    for sign, scorer in ((1.0, 0), (-1.0, 1)):
        if sign * p[0] >= half_l and sign * prev[0] < half_l:
            dx = p[0] - prev[0]
            frac = (sign * half_l - prev[0]) / dx if dx != 0 else 1.0
            y_cross = prev[1] + frac * (p[1] - prev[1])
            if abs(y_cross) < config.goal_width / 2:
                return scorer
    lim_x = half_l - r
    if abs(p[0]) > lim_x and (abs(p[1]) >= config.goal_width / 2 or abs(p[0]) >= half_l):
        sign = math.copysign(1.0, p[0])
        p[0] = sign * (2 * lim_x) - p[0]
        if sign * v[0] > 0:
            v[0] = -e * v[0]
        events.append(Event("wall_bounce", -1, t))
    lim_y = half_w - r
    if abs(p[1]) > lim_y:
        sign = math.copysign(1.0, p[1])
        p[1] = sign * (2 * lim_y) - p[1]
        if sign * v[1] > 0:
            v[1] = -e * v[1]
        events.append(Event("wall_bounce", -1, t))
    np.clip(p, [-half_l, -half_w], [half_l, half_w], out=p)
    return None


# -- observations and rewards ------------------------------------------------


def to_body_frame(points, origin, heading) -> np.ndarray:
    """Express world points (..., 2) in a frame at ``origin`` rotated by ``heading``."""
    c, s = math.cos(heading), math.sin(heading)
    d = np.asarray(points, dtype=float) - np.asarray(origin, dtype=float)
    return np.stack([c * d[..., 0] + s * d[..., 1], -s * d[..., 0] + c * d[..., 1]], axis=-1)


def rotate_to_body(vectors, heading) -> np.ndarray:
    return to_body_frame(vectors, np.zeros(2), heading)


def privileged_from_points(position, heading, ball_pos, ball_vel, opp_pos, opp_vel, target_goal, own_goal):
    return PrivilegedState(
        ball_position=to_body_frame(ball_pos, position, heading),
        ball_velocity=rotate_to_body(ball_vel, heading),
        opponent_position=to_body_frame(opp_pos, position, heading),
        opponent_velocity=rotate_to_body(opp_vel, heading),
        target_goal=to_body_frame(target_goal, position, heading),
        own_goal=to_body_frame(own_goal, position, heading),
    )


def privileged_state(world: WorldState, agent_id: int, config: SimConfig | None = None) -> PrivilegedState:
    """Ground-truth egocentric quantities for the critic (and state-based policies)."""
    if agent_id not in (0, 1):
        raise ValueError(f"invalid agent_id {agent_id}")
    pitch = PitchGeometry.from_config(config or SimConfig())
    me, opp = world.agents[agent_id], world.agents[1 - agent_id]
    return privileged_from_points(
        me.position, me.heading,
        world.ball_position, world.ball_velocity,
        opp.position, opp.linear_velocity,
        pitch.target_goal(agent_id), pitch.own_goal(agent_id),
    )


def proprioception(world: WorldState, agent_id: int, last_action, config: SimConfig | None = None) -> np.ndarray:
    """Onboard body sensing: yaw rate, tilt, head pan and the last applied action.

    ``last_action`` is the filtered command in normalised [-1, 1] units.
    """
    config = config or SimConfig()
    me = world.agents[agent_id]
    head = [me.angular_velocity / config.max_turn_rate, me.tilt, me.head_pan / config.head_pan_limit]
    return np.concatenate([head, np.asarray(last_action, dtype=float)])


def _unit(v) -> np.ndarray:
    n = math.hypot(v[0], v[1])
    return v / n if n > 1e-12 else np.zeros(2)


def compute_rewards(world: WorldState, world_next: WorldState, events, agent_id: int, config: SimConfig | None = None) -> RewardComponents:
    config = config or SimConfig()
    pitch = PitchGeometry.from_config(config)
    scoring = 0.0
    for ev in events:
        if ev.kind == "goal":
            scoring += 1.0 if ev.agent == agent_id else -1.0
    me = world_next.agents[agent_id]
    to_ball = _unit(world_next.ball_position - me.position)
    vel_to_ball = float(np.dot(me.linear_velocity, to_ball))
    to_goal = _unit(pitch.target_goal(agent_id) - world_next.ball_position)
    ball_to_goal = float(np.dot(world_next.ball_velocity, to_goal))
    upright = math.cos(me.tilt)
    comps = np.array([scoring, vel_to_ball, ball_to_goal, upright])
    total = float(np.dot(reward_weights(config), comps))
    return RewardComponents(scoring, vel_to_ball, ball_to_goal, upright, total)
