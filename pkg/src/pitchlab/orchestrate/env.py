"""Episode-level environment: simulator, camera pipeline and opponent in one object."""

from __future__ import annotations

import dataclasses
import threading

import numpy as np

from ..config import ExperimentConfig, RenderConfig, SimConfig
from ..render import AugmentConfig, augment, calibrate_colors, load_scene_variants, randomize_ball, render_egocentric, sample_scene, scene_calibration
from ..sim import (
    BallParams,
    PhysicsParams,
    ScenarioKind,
    ZERO_ACTION,
    Action,
    compute_rewards,
    privileged_state,
    proprioception,
    reset,
    smooth_action,
    step,
)
from .agents import Agent, StillAgent

STAGES = ("getup", "scorer", "distill")

_calib_cache: dict = {}
_calib_lock = threading.Lock()


def stage_sim_config(sim: SimConfig, stage: str | None, getup_seconds: float = 5.0) -> SimConfig:
    """Stage-specific episode length and reward weights.

    The get-up expert is rewarded for being upright only and plays short
    episodes; the scorer and the distilled agent use the configured weights.
    """
    if stage == "getup":
        return dataclasses.replace(
            sim, episode_seconds=getup_seconds, end_on_goal=False,
            reward_scoring=0.0, reward_velocity_to_ball=0.0, reward_ball_to_goal=0.0, reward_upright=1.0,
        )
    return sim


def stage_scenario(stage: str | None) -> ScenarioKind:
    # the penalty placement starts agent 0 fallen with the other agent far away
    return ScenarioKind.PENALTY if stage == "getup" else ScenarioKind.FULL_GAME


def calibration_for(scene, render_config: RenderConfig, sim_config: SimConfig):
    key = (scene.id, render_config, sim_config.length, sim_config.width, sim_config.goal_width)
    with _calib_lock:
        if key not in _calib_cache:
            _calib_cache[key] = scene_calibration(scene, render_config, sim_config)
        return _calib_cache[key]


def truth_vector(world, agent_id: int) -> np.ndarray:
    me, opp = world.agents[agent_id], world.agents[1 - agent_id]
    return np.array([*me.position, me.heading, *world.ball_position, *opp.position], dtype=np.float32)


class SoccerEnv:
    """Agent 0 is the learner's body; agent 1 is driven by ``opponent``.

    Each episode draws a scene variant, ball appearance and physics constants
    from the episode rng.  Frames go through calibration and, when enabled,
    photometric augmentation.
    """

    def __init__(self, config: ExperimentConfig | None = None, stage: str | None = None, scenes=None, augment_frames: bool = True):
        self.config = config or ExperimentConfig()
        self.stage = stage
        self.sim = stage_sim_config(self.config.sim, stage, self.config.orchestrate.getup_episode_seconds)
        self.render = self.config.render
        self.scenes = scenes if scenes is not None else load_scene_variants(self.render.scene_dir or None, self.render.scene_variants)
        self.augment_frames = augment_frames
        self.augment_params = AugmentConfig.from_render_config(self.render)
        self.opponent: Agent = StillAgent(self.sim)
        self.world = None

    # -- observations ---------------------------------------------------------

    def frame(self, agent_id: int, rng) -> np.ndarray:
        raw = render_egocentric(self.world, agent_id, self.scene, self.render, self.sim)
        out = raw
        if self.render.calibration:
            nerf, real = calibration_for(self.scene, self.render, self.sim)
            out = np.rint(calibrate_colors(raw, nerf, real)).astype(np.uint8)
        if self.augment_frames:
            out = augment(out, rng, self.augment_params)
        return out

    def observe(self, agent_id: int, rng, with_frame: bool = True) -> dict:
        last = self.applied[agent_id].to_normalized(self.sim)
        return {
            "frame": self.frame(agent_id, rng) if with_frame else None,
            "proprio": proprioception(self.world, agent_id, last, self.sim).astype(np.float32),
            "privileged": privileged_state(self.world, agent_id, self.sim).as_array().astype(np.float32),
            "truth": truth_vector(self.world, agent_id),
        }

    # -- episode --------------------------------------------------------------

    def reset(self, rng: np.random.Generator, opponent: Agent | None = None, scenario=None, randomize: bool = True) -> dict:
        scenario = ScenarioKind.parse(scenario) if scenario is not None else stage_scenario(self.stage)
        if opponent is not None:
            self.opponent = opponent
        self.scene = sample_scene(rng, self.scenes)
        base_ball = BallParams.from_config(self.sim)
        base_phys = PhysicsParams.from_config(self.sim)
        if randomize:
            ball = randomize_ball(rng, base_ball, self.render.ball_scale_low, self.render.ball_scale_high)
            phys = base_phys.scaled(rng, self.config.orchestrate.physics_randomization)
        else:
            ball, phys = base_ball, base_phys
        seed = int(rng.integers(2**31))
        self.world = reset(self.sim, scenario, seed, ball, phys)
        self.scenario = scenario
        self.applied = [ZERO_ACTION, ZERO_ACTION]
        self.opponent.reset()
        self.done = False
        self.events = []
        return self.observe(0, rng)

    def step(self, action_norm, rng: np.random.Generator):
        """Advance one control step.  Returns (obs, reward, components, done, events)."""
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        opp_obs = self.observe(1, rng, with_frame=self.opponent.needs_frame)
        opp_a, _ = self.opponent.act(opp_obs, rng)
        cmds = []
        for i, a in enumerate((action_norm, opp_a)):
            u = smooth_action(self.applied[i], Action.from_normalized(a, self.sim), self.sim)
            self.applied[i] = u
            cmds.append(u)
        prev = self.world
        self.world, events = step(prev, cmds, self.sim)
        self.events = events
        comps = compute_rewards(prev, self.world, events, 0, self.sim)
        goal = any(e.kind == "goal" for e in events)
        self.done = self.world.time >= self.sim.episode_seconds - 1e-9 or (self.sim.end_on_goal and goal)
        return self.observe(0, rng), comps.total, comps, self.done, events
