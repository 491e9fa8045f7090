"""Active-perception study: does the head keep the ball near the centre of view?"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..config import ExperimentConfig, make_rng
from ..orchestrate import Agent, StillAgent, head_only
from ..render import gaze_error
from ..sim import ScenarioKind, WorldState
from .setpieces import eval_env, make_agent


@dataclass
class GazeStudyResult:
    controlled: np.ndarray  # (episodes, steps) radians, head under policy control
    fixed: np.ndarray  # (episodes, steps) radians, head locked forward
    fov_half: float
    traces: dict = field(default_factory=dict, repr=False)  # condition -> list of (T, 6) arrays

    @property
    def medians(self) -> dict:
        return {"controlled": float(np.median(self.controlled)), "fixed": float(np.median(self.fixed))}

    def histograms(self, bins: int = 36):
        edges = np.linspace(0.0, math.pi, bins + 1)
        return edges, np.histogram(self.controlled, edges)[0], np.histogram(self.fixed, edges)[0]


class _HeadOnly(Agent):
    """Wraps a policy: the head-pan command passes through, everything else is zeroed."""

    def __init__(self, inner: Agent, sim_config):
        self.inner = inner
        self.sim_config = sim_config
        self.needs_frame = inner.needs_frame

    def reset(self):
        self.inner.reset()

    def act(self, obs, rng):
        a, info = self.inner.act(obs, rng)
        return head_only(a, self.sim_config), info


def trace_row(world: WorldState, agent_id: int = 0) -> np.ndarray:
    me = world.agents[agent_id]
    return np.array([*me.position, me.heading, me.head_pan, *world.ball_position])


def gaze_rollout(env, agent: Agent, rng, steps: int, obs=None):
    """Angular distance before each of ``steps`` actions from the env's current world."""
    obs = obs if obs is not None else env.observe(0, rng)
    dist, rows = np.zeros(steps), np.zeros((steps, 6))
    for t in range(steps):
        dist[t] = gaze_error(env.world, 0)
        rows[t] = trace_row(env.world)
        a, _ = agent.act(obs, rng)
        obs, *_ = env.step(a, rng)
    return dist, rows


def run_gaze_study(policy, seed: int | None = None, config: ExperimentConfig | None = None, episodes: int | None = None, steps: int | None = None) -> GazeStudyResult:
    """Ball placed in front and rolling at up to 1 m/s; compare the policy's head
    control (all other commands zeroed) with a head fixed facing forward.

    Both conditions replay the same initial worlds.
    """
    config = config or ExperimentConfig()
    ec = config.eval
    seed = config.seed if seed is None else seed
    episodes = episodes or ec.gaze_episodes
    steps = steps or ec.gaze_steps
    env = eval_env(config, steps * config.sim.dt + 1.0)
    conditions = {"controlled": _HeadOnly(make_agent(policy, config), config.sim), "fixed": StillAgent(config.sim)}
    out = {k: np.zeros((episodes, steps)) for k in conditions}
    traces = {k: [] for k in conditions}
    for name, agent in conditions.items():
        for e in range(episodes):
            rng = make_rng(seed, "eval.gaze", e)
            obs = env.reset(rng, StillAgent(config.sim), ScenarioKind.GAZE_TRACKING, randomize=False)
            agent.reset()
            out[name][e], rows = gaze_rollout(env, agent, rng, steps, obs)
            traces[name].append(rows)
    return GazeStudyResult(out["controlled"], out["fixed"], math.radians(config.render.fov_deg) / 2, traces)
