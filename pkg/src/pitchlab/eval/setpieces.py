"""Set-piece benchmarks: walking speed, turning speed, kicking power and penalty scoring."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import ExperimentConfig, make_rng
from ..errors import EvaluationConfigError
from ..orchestrate import Agent, NetworkAgent, RandomAgent, ScriptedAgent, SoccerEnv, StillAgent, load_snapshot
from ..sim import ScenarioKind, wrap_angle

SET_PIECES = ("walking_speed", "turning_speed", "kicking_power", "penalty")
UNITS = {"walking_speed": "m/s", "turning_speed": "rad/s", "kicking_power": "m/s", "penalty": "goal"}
_ALIASES = {"walking": "walking_speed", "turning": "turning_speed", "kicking": "kicking_power", "scoring": "penalty"}


def parse_kind(kind) -> str:
    k = str(getattr(kind, "value", kind)).lower().replace("-", "_")
    k = _ALIASES.get(k, k)
    if k not in SET_PIECES:
        raise EvaluationConfigError(f"not a set piece: {kind!r}; expected one of {', '.join(SET_PIECES)}")
    return k


@dataclass
class SetPieceTrial:
    value: float
    agent_path: np.ndarray  # (T, 2)
    ball_path: np.ndarray  # (T, 2)
    duration: float


@dataclass
class SetPieceResult:
    kind: str
    values: np.ndarray
    traces: list = field(default_factory=list, repr=False)

    @property
    def unit(self) -> str:
        return UNITS[self.kind]

    @property
    def trials(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if len(self.values) else float("nan")

    @property
    def stderr(self) -> float:
        """Sample standard deviation over sqrt(trials)."""
        n = len(self.values)
        if n < 2:
            return 0.0
        return float(np.std(self.values, ddof=1) / math.sqrt(n))


def make_agent(policy, config: ExperimentConfig, deterministic: bool | None = None) -> Agent:
    """Agent from an Agent, a zero-argument factory, a built-in name or a snapshot path."""
    if isinstance(policy, Agent):
        return policy
    if callable(policy):
        return policy()
    if deterministic is None:
        deterministic = config.eval.deterministic_policy
    builtin = {"scripted": lambda: ScriptedAgent(config.sim), "still": lambda: StillAgent(config.sim), "random": RandomAgent}
    if isinstance(policy, str) and policy in builtin:
        return builtin[policy]()
    snap = load_snapshot(policy)
    return NetworkAgent(snap.load(), snap.network(config.network), deterministic=deterministic)


def eval_env(config: ExperimentConfig, seconds: float) -> SoccerEnv:
    """Nominal-physics environment with a stationary opponent and our own stopping rules."""
    env = SoccerEnv(config, "distill", augment_frames=False)
    env.sim = dataclasses.replace(env.sim, episode_seconds=seconds + 1.0, end_on_goal=False)
    return env


def _measure(kind, env: SoccerEnv, agent: Agent, rng, seconds: float, ec) -> SetPieceTrial:
    cfg = env.sim
    obs = env.reset(rng, StillAgent(cfg), ScenarioKind.parse(kind), randomize=False)
    agent.reset()
    me = env.world.agents[0]
    apath, bpath = [me.position.copy()], [env.world.ball_position.copy()]
    samples = []
    kick_time = None
    n_steps = int(round(seconds / cfg.dt))
    value = None
    for _ in range(n_steps):
        w = env.world
        me = w.agents[0]
        if kind == "walking_speed" and math.dist(me.position, w.ball_position) <= cfg.kick_range:
            break
        if kind == "turning_speed":
            rel = w.ball_position - me.position
            if abs(wrap_angle(math.atan2(rel[1], rel[0]) - me.heading)) <= ec.facing_tolerance:
                break
        a, _ = agent.act(obs, rng)
        obs, _, _, _, events = env.step(a, rng)
        w = env.world
        me = w.agents[0]
        apath.append(me.position.copy())
        bpath.append(w.ball_position.copy())
        if kind == "walking_speed":
            samples.append(float(np.dot(me.linear_velocity, me.forward)))
        elif kind == "turning_speed":
            samples.append(abs(float(me.angular_velocity)))
        elif kind == "kicking_power":
            if kick_time is None and any(e.kind == "kick" and e.agent == 0 for e in events):
                kick_time = w.time
            if kick_time is not None:
                if w.time > kick_time + ec.kick_window + 1e-9:
                    break
                samples.append(float(np.hypot(*w.ball_velocity)))
        elif any(e.kind == "goal" and e.agent == 0 for e in events):
            value = 1.0
            break
    if kind == "penalty":
        value = value or 0.0
    elif kind == "kicking_power":
        value = max(samples) if samples else 0.0
    else:
        value = float(np.mean(samples)) if samples else 0.0
    return SetPieceTrial(value, np.array(apath), np.array(bpath), env.world.time)


def run_set_piece(policy, kind, trials: int | None = None, seed: int | None = None, config: ExperimentConfig | None = None) -> SetPieceResult:
    """Run ``trials`` independent episodes of one set piece.

    Walking: mean forward speed from the first step until the ball is within
    kick range.  Turning: mean absolute yaw rate from the facing-away start
    until facing the ball.  Kicking: peak ball speed within the kick window
    after the first kick.  Penalty: fallen start, stationary keeper, goal
    within the time limit.  Timeouts fall back to the whole episode (or 0
    for kicking and scoring).
    """
    config = config or ExperimentConfig()
    ec = config.eval
    kind = parse_kind(kind)
    if trials is None:
        trials = ec.scoring_trials if kind == "penalty" else ec.trials
    if trials < 1:
        raise EvaluationConfigError(f"trials must be positive, got {trials}")
    seed = config.seed if seed is None else seed
    seconds = ec.penalty_seconds if kind == "penalty" else ec.setpiece_timeout
    env = eval_env(config, seconds)
    agent = make_agent(policy, config)
    out = []
    for k in range(trials):
        rng = make_rng(seed, f"eval.{kind}", k)
        out.append(_measure(kind, env, agent, rng, seconds, ec))
    return SetPieceResult(kind, np.array([t.value for t in out]), out)


def run_set_pieces(policy, config: ExperimentConfig | None = None, trials: int | None = None, seed: int | None = None, kinds=SET_PIECES) -> dict:
    """All set pieces; ``trials`` overrides the agility count only, scoring keeps its own."""
    config = config or ExperimentConfig()
    out = {}
    for kind in kinds:
        kind = parse_kind(kind)
        n = None if kind == "penalty" else trials
        out[kind] = run_set_piece(policy, kind, n, seed, config)
    return out


def write_trials_csv(path, results: dict) -> Path:
    """Per-trial values: policy, metric, trial, value.  ``results`` is {policy: {kind: SetPieceResult}}."""
    import csv

    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "metric", "trial", "value"])
        for policy, per_kind in results.items():
            for kind, res in per_kind.items():
                for i, v in enumerate(res.values):
                    w.writerow([policy, kind, i, repr(float(v))])
    return path


def read_trials_csv(path) -> dict:
    import csv

    out: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["policy"], {}).setdefault(row["metric"], []).append(float(row["value"]))
    return {p: {k: SetPieceResult(k, np.array(v)) for k, v in d.items()} for p, d in out.items()}
