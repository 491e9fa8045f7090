"""Acting policies: learned networks, the random opponent and scripted controllers.

Every agent maps an observation dict to a normalised action in [-1, 1]^6;
the environment clamps it, maps it onto the physical action box and applies
the exponential action filter.
"""

from __future__ import annotations

import math

import numpy as np

from ..config import SimConfig
from ..diffnet import ParameterSet, PolicyNetwork
from ..diffnet.networks import LOG_SQRT_2PI
from ..sim import ACTION_DIM, ZERO_ACTION, Action


class Agent:
    needs_frame = False
    recurrent = False

    def reset(self) -> None:
        pass

    def act(self, obs: dict, rng: np.random.Generator):
        """Return (normalised action, behaviour info or None)."""
        raise NotImplementedError


class NetworkAgent(Agent):
    """Samples from (or takes the mean of) a recurrent Gaussian policy."""

    recurrent = True

    def __init__(self, params: ParameterSet, network: PolicyNetwork, deterministic: bool = False):
        self.params = params
        self.network = network
        self.deterministic = deterministic
        self.needs_frame = network.observation == "vision"
        self.reset()

    def reset(self) -> None:
        self.state = self.network.zero_state(1)

    def act(self, obs, rng):
        batch = {k: np.asarray(obs[k])[None] for k in ("frame", "proprio", "privileged") if obs.get(k) is not None}
        mean, std, core, self.state = self.network.step(self.params, batch, self.state)
        mean, std = mean[0], std[0]
        if self.deterministic:
            a = mean.copy()
        else:
            a = mean + std * rng.standard_normal(ACTION_DIM).astype(mean.dtype)
        z = (a.astype(np.float64) - mean) / std
        logp = float(np.sum(-0.5 * z * z - np.log(std.astype(np.float64)) - LOG_SQRT_2PI))
        return a, {"mean": mean, "std": std, "logp": logp, "core": core[0]}


class RandomAgent(Agent):
    """Uniform over the action box (uniform in normalised units)."""

    def act(self, obs, rng):
        return rng.uniform(-1.0, 1.0, ACTION_DIM), None


class StillAgent(Agent):
    """Never moves: the zero physical command."""

    def __init__(self, sim_config: SimConfig | None = None):
        self._a = ZERO_ACTION.to_normalized(sim_config or SimConfig())

    def act(self, obs, rng):
        return self._a.copy(), None


class ScriptedAgent(Agent):
    """Hand-coded chase-and-kick controller driven by the privileged state.

    Balances the tilt axis, gets up when fallen, tracks the ball with the
    head, walks to a point behind the ball on the line to the target goal
    and kicks when the ball is in front and the goal roughly ahead.
    """

    def __init__(self, sim_config: SimConfig | None = None, kick: bool = True, move: bool = True):
        self.config = sim_config or SimConfig()
        self.kick = kick
        self.move = move

    def act(self, obs, rng):
        cfg = self.config
        priv = np.asarray(obs["privileged"], dtype=float)
        proprio = np.asarray(obs["proprio"], dtype=float)
        tilt, pan = proprio[1], proprio[2] * cfg.head_pan_limit
        ball, goal = priv[0:2], priv[8:10]
        a = dict(
            target_forward_speed=0.0, target_lateral_speed=0.0, target_turn_rate=0.0,
            head_pan_rate=0.0, tilt_torque=float(np.clip(-3.0 * tilt, -1, 1)), kick_strength=0.0,
        )
        bearing = math.atan2(ball[1], ball[0])
        a["head_pan_rate"] = 8.0 * (bearing - pan)
        if abs(tilt) > cfg.tilt_fall_threshold:
            a["tilt_torque"] = -math.copysign(1.0, tilt)
            return Action(**a).clamped(cfg).to_normalized(cfg), None
        if self.move:
            to_goal = goal - ball
            to_goal /= max(np.linalg.norm(to_goal), 1e-9)
            dist = float(np.linalg.norm(ball))
            behind = ball - 0.18 * to_goal
            aim = behind if dist > 0.3 else ball
            angle = math.atan2(aim[1], aim[0])
            a["target_turn_rate"] = 4.0 * angle
            a["target_forward_speed"] = cfg.max_forward_speed * max(0.0, math.cos(angle)) ** 3
            a["target_lateral_speed"] = cfg.max_lateral_speed * float(np.clip(2.0 * aim[1], -1, 1)) * (dist < 0.5)
            goal_angle = math.atan2(goal[1], goal[0])
            if self.kick and dist < cfg.kick_range and abs(bearing) < 0.6 and abs(goal_angle) < 0.7:
                a["kick_strength"] = 1.0
        return Action(**a).clamped(cfg).to_normalized(cfg), None


def head_only(action_norm, sim_config: SimConfig | None = None) -> np.ndarray:
    """Keep the head-pan command, replace everything else by the zero command."""
    out = ZERO_ACTION.to_normalized(sim_config or SimConfig())
    out[3] = np.asarray(action_norm)[3]
    return out
