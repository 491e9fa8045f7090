"""Experiment configuration: typed sections, flat ``key = value`` files, seeding.

Every tunable lives in one of the section dataclasses below and is addressed
from config files and the command line as ``<section>.<field>``.  Fields whose
default comes from the published experiment tables are tagged ``paper=True``;
all other defaults are flagged ``non_paper_default = true`` when the effective
configuration is dumped.

Randomness
----------
All random streams derive from a single root seed.  ``make_rng(seed, name, *ids)``
builds a ``numpy.random.Generator`` from ``SeedSequence(seed,
spawn_key=(crc32(name), *ids))``: the subsystem name picks a stream and the
integer ids (actor index, episode counter, ...) pick a sub-stream.  Streams are
therefore independent of the order in which they are requested.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError


def paper(default, **kw):
    return field(default=default, metadata={"paper": True, **kw})


def nonpaper(default, **kw):
    return field(default=default, metadata={"paper": False, **kw})


@dataclass(frozen=True)
class SimConfig:
    length: float = paper(5.0)
    width: float = paper(4.0)
    goal_width: float = nonpaper(1.6)
    wall_restitution: float = nonpaper(0.8)
    dt: float = paper(0.025)
    action_smoothing: float = paper(0.8)
    agent_radius: float = nonpaper(0.12)
    agent_mass: float = paper(3.5)
    max_forward_speed: float = nonpaper(0.6)
    max_lateral_speed: float = nonpaper(0.3)
    max_turn_rate: float = nonpaper(4.0)
    max_head_rate: float = nonpaper(4.0)
    head_pan_limit: float = paper(2.5)
    velocity_time_constant: float = nonpaper(0.15)
    tilt_fall_threshold: float = nonpaper(0.8)
    tilt_drift: float = nonpaper(0.5)
    tilt_torque_gain: float = nonpaper(1.5)
    collision_tilt_gain: float = nonpaper(0.3)
    kick_range: float = nonpaper(0.25)
    kick_cooldown: float = nonpaper(0.5)
    kick_impulse: float = nonpaper(0.22)
    kick_threshold: float = nonpaper(0.05)
    kick_half_angle: float = nonpaper(math.pi / 2)
    kick_recoil: float = nonpaper(0.1)
    ball_radius: float = nonpaper(0.07)
    ball_mass: float = nonpaper(0.1)
    ball_color: tuple = nonpaper((200.0, 100.0, 30.0))
    ball_damping: float = nonpaper(0.4)
    ball_agent_restitution: float = nonpaper(0.5)
    agent_agent_restitution: float = nonpaper(0.2)
    max_ball_speed: float = nonpaper(8.0)
    episode_seconds: float = nonpaper(20.0)
    end_on_goal: bool = nonpaper(False)  # False: play restarts from the centre after a goal
    reward_scoring: float = nonpaper(1.0)
    reward_velocity_to_ball: float = nonpaper(0.05)
    reward_ball_to_goal: float = nonpaper(0.1)
    reward_upright: float = nonpaper(0.01)


@dataclass(frozen=True)
class RenderConfig:
    width: int = paper(40)
    height: int = paper(30)
    fov_deg: float = nonpaper(70.0)
    horizon_row: float = nonpaper(9.0)
    floor_fov_deg: float = nonpaper(70.0)
    camera_height: float = nonpaper(0.45)
    wall_height: float = nonpaper(0.25)
    goal_height: float = nonpaper(0.5)
    opponent_height: float = paper(0.51)
    opponent_color: tuple = nonpaper((35.0, 35.0, 45.0))
    scene_dir: str = nonpaper("")
    scene_variants: tuple = paper((0, 1, 2, 3))
    ball_scale_low: float = paper(0.8)
    ball_scale_high: float = paper(1.2)
    calibration: bool = nonpaper(True)
    augment_brightness: float = nonpaper(25.5)
    augment_contrast: float = nonpaper(0.1)
    augment_saturation: float = nonpaper(0.1)
    augment_hue: float = nonpaper(0.1)


@dataclass(frozen=True)
class NetworkConfig:
    observation: str = nonpaper("vision")
    critic_observation: str = nonpaper("")  # empty: same as the actor
    encoder_channels: tuple = paper((8, 16, 16))
    feature_width: int = nonpaper(128)
    lstm_width: int = paper(64)
    critic_hidden: int = nonpaper(128)
    num_atoms: int = nonpaper(51)
    v_min: float = nonpaper(-150.0)
    v_max: float = nonpaper(150.0)
    init_std: float = nonpaper(0.5)
    std_floor: float = nonpaper(1e-4)


@dataclass(frozen=True)
class LearnerConfig:
    discount: float = paper(0.99)
    batch_size: int = paper(80)
    trajectory_length: int = paper(48)
    action_samples: int = paper(20)
    actor_lr: float = paper(1e-4)
    critic_lr: float = paper(1e-4)
    temperature_lr: float = paper(1e-2)
    tradeoff_lr: float = paper(1e-4)
    eps_kl_mean: float = paper(0.0025)
    eps_kl_cov: float = paper(1e-6)
    eps_estep: float = nonpaper(0.1)
    n_step: int = nonpaper(5)
    target_update_period: int = nonpaper(100)
    grad_clip_norm: float = nonpaper(40.0)
    init_temperature: float = nonpaper(1.0)
    init_alpha_mean: float = nonpaper(1.0)
    init_alpha_cov: float = nonpaper(1.0)
    adam_beta1: float = nonpaper(0.9)
    adam_beta2: float = nonpaper(0.999)
    adam_eps: float = nonpaper(1e-8)
    distill_init_coef: float = nonpaper(1.0)
    distill_decay: float = nonpaper(0.995)
    distill_return_threshold: float = nonpaper(0.5)


@dataclass(frozen=True)
class ReplayConfig:
    capacity: int = paper(100000)
    mix_ratio: float = nonpaper(-1.0)  # negative: 0.5 with offline data, else 0
    offline_data: tuple = nonpaper(())
    samples_per_insert: float = paper(16.0)
    insert_slack: float = nonpaper(2.0)  # slices actors may run ahead of the ratio


@dataclass(frozen=True)
class OrchestrateConfig:
    num_actors: int = nonpaper(8)
    threaded: bool = nonpaper(False)
    snapshot_period: int = nonpaper(500)
    learner_steps: int = nonpaper(2000)
    time_budget_s: float = nonpaper(0.0)
    physics_randomization: float = nonpaper(0.1)
    expert_trajectory_length: int = paper(48)
    distill_trajectory_length: int = paper(145)
    getup_episode_seconds: float = nonpaper(5.0)
    teachers: tuple = nonpaper(())
    eval_every: int = nonpaper(250)
    eval_episodes: int = nonpaper(20)
    min_replay_slices: int = nonpaper(0)


@dataclass(frozen=True)
class ProbeConfig:
    n_components: int = nonpaper(5)
    lr: float = nonpaper(3e-3)
    steps: int = nonpaper(2000)
    batch_size: int = nonpaper(256)
    episodes: int = nonpaper(200)
    episode_steps: int = nonpaper(400)
    frame: str = nonpaper("global")
    std_floor: float = nonpaper(1e-3)


@dataclass(frozen=True)
class EvalConfig:
    trials: int = paper(10)
    scoring_trials: int = paper(250)
    penalty_seconds: float = paper(12.0)
    gaze_episodes: int = paper(16)
    gaze_steps: int = paper(100)
    kick_window: float = nonpaper(0.25)
    setpiece_timeout: float = nonpaper(10.0)
    facing_tolerance: float = nonpaper(0.2)
    deterministic_policy: bool = nonpaper(False)


SECTIONS = {
    "sim": SimConfig,
    "render": RenderConfig,
    "network": NetworkConfig,
    "learner": LearnerConfig,
    "replay": ReplayConfig,
    "orchestrate": OrchestrateConfig,
    "probes": ProbeConfig,
    "eval": EvalConfig,
}

TOP_LEVEL = {"seed": 0, "output_dir": "runs/default"}


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    replay: ReplayConfig = field(default_factory=ReplayConfig)
    orchestrate: OrchestrateConfig = field(default_factory=OrchestrateConfig)
    probes: ProbeConfig = field(default_factory=ProbeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    output_dir: str = "runs/default"
    overridden: frozenset = frozenset()

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Return a copy with flat ``section.field`` overrides applied."""
        grouped: dict[str, dict] = {}
        top = {}
        for key, value in overrides.items():
            if key in TOP_LEVEL:
                top[key] = _coerce(key, TOP_LEVEL[key], value)
                continue
            section, _, name = key.partition(".")
            cls = SECTIONS.get(section)
            if cls is None or name not in {f.name for f in dataclasses.fields(cls)}:
                raise ConfigError(f"unknown config key: {key}")
            current = getattr(getattr(self, section), name)
            grouped.setdefault(section, {})[name] = _coerce(key, current, value)
        updates = {s: dataclasses.replace(getattr(self, s), **kv) for s, kv in grouped.items()}
        return dataclasses.replace(
            self, **updates, **top, overridden=self.overridden | frozenset(overrides)
        )

    def flat(self) -> dict:
        out = {}
        for section in SECTIONS:
            for f in dataclasses.fields(getattr(self, section)):
                out[f"{section}.{f.name}"] = getattr(getattr(self, section), f.name)
        out["seed"] = self.seed
        out["output_dir"] = self.output_dir
        return out

    def digest(self) -> str:
        """Stable hash of every value that can influence a run."""
        flat = {k: v for k, v in self.flat().items() if k != "output_dir"}
        blob = json.dumps(flat, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def dumps(self) -> str:
        lines = [f"# pitchlab effective configuration (digest {self.digest()})"]
        for key, value in self.flat().items():
            line = f"{key} = {_toml_value(value)}"
            if key in TOP_LEVEL:
                lines.append(line)
                continue
            section, _, name = key.partition(".")
            meta = {f.name: f.metadata for f in dataclasses.fields(SECTIONS[section])}[name]
            if key not in self.overridden and not meta.get("paper", False):
                line += "  # non_paper_default = true"
            lines.append(line)
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path


def _coerce(key, current, value):
    if isinstance(current, bool):
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ConfigError(f"invalid boolean for {key}: {value!r}")
        return bool(value)
    try:
        if isinstance(current, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, tuple):
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
                if current and not isinstance(current[0], str):
                    value = [type(current[0])(float(v)) if isinstance(current[0], int) else float(v) for v in value]
            return tuple(value)
        if isinstance(current, str):
            return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for {key}: {value!r}") from exc
    return value


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _flatten(tree: dict, prefix="") -> dict:
    out = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def parse_config_text(text: str) -> dict:
    import tomli

    try:
        return _flatten(tomli.loads(text))
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc


def load_config(path=None, overrides=None, seed=None) -> ExperimentConfig:
    """Load a flat config file, honouring ``PITCHLAB_CONFIG``/``PITCHLAB_SEED``."""
    path = path or os.environ.get("PITCHLAB_CONFIG")
    values = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text()))
    env_seed = os.environ.get("PITCHLAB_SEED")
    if env_seed is not None:
        values["seed"] = env_seed
    if overrides:
        values.update(overrides)
    if seed is not None:
        values["seed"] = seed
    return ExperimentConfig().with_overrides(values)


def make_rng(seed: int, name: str, *ids: int) -> np.random.Generator:
    key = (zlib.crc32(name.encode()),) + tuple(int(i) for i in ids)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
