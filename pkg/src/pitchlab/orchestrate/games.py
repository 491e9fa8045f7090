"""Evaluation games: play whole episodes and summarise goals, returns and recovery."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..config import ExperimentConfig, make_rng
from .agents import Agent
from .env import SoccerEnv


@dataclass
class GameResult:
    ret: float
    goals_for: int
    goals_against: int
    steps: int
    upright_time: float  # seconds until agent 0 first stood upright; inf if never

    @property
    def goal_difference(self) -> int:
        return self.goals_for - self.goals_against

    @property
    def won(self) -> bool:
        return self.goals_for > self.goals_against


def play_game(env: SoccerEnv, agent: Agent, opponent: Agent, rng, scenario=None, max_steps: int | None = None) -> GameResult:
    agent.reset()
    obs = env.reset(rng, opponent, scenario=scenario)
    ret, steps = 0.0, 0
    thr = env.sim.tilt_fall_threshold
    upright_t = 0.0 if abs(env.world.agents[0].tilt) <= thr else math.inf
    done = False
    while not done and (max_steps is None or steps < max_steps):
        a, _ = agent.act(obs, rng)
        obs, r, _, done, _ = env.step(a, rng)
        ret += r
        steps += 1
        if upright_t == math.inf and abs(env.world.agents[0].tilt) <= thr:
            upright_t = env.world.time
    s = env.world.score
    return GameResult(ret, s[0], s[1], steps, upright_t)


def play_games(config: ExperimentConfig, stage, agent_fn, opponent_fn, episodes: int, seed_name: str = "eval.games", scenes=None, augment: bool = False) -> list:
    """``episodes`` independent games; agent/opponent factories take the episode rng."""
    env = SoccerEnv(config, stage, scenes, augment_frames=augment)
    out = []
    for k in range(episodes):
        rng = make_rng(config.seed, seed_name, k)
        out.append(play_game(env, agent_fn(rng), opponent_fn(rng), rng))
    return out


def summarize_games(results, upright_within: float = 2.0) -> dict:
    if not results:
        return {"episodes": 0}
    gd = np.array([r.goal_difference for r in results], dtype=float)
    return {
        "episodes": len(results),
        "mean_return": float(np.mean([r.ret for r in results])),
        "win_rate": float(np.mean([r.won for r in results])),
        "score_rate": float(np.mean([r.goals_for > 0 for r in results])),
        "mean_goal_difference": float(gd.mean()),
        "upright_rate": float(np.mean([r.upright_time <= upright_within for r in results])),
    }
