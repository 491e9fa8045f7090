"""Actor loops: play episodes with the latest policy and cut them into fixed-length slices."""

from __future__ import annotations

import logging
import math
import threading
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..config import ExperimentConfig, make_rng
from ..diffnet import ParameterSet, PolicyNetwork
from ..diffnet.networks import LOG_SQRT_2PI
from ..errors import SimulationFault
from ..replay import TrajectorySlice, empty_slice
from .agents import Agent, NetworkAgent, RandomAgent
from .env import SoccerEnv

log = logging.getLogger(__name__)


class PolicySource:
    """Latest learner parameters, published by the learner and read by actors."""

    def __init__(self, params: ParameterSet | None = None, version: int = 0):
        self._lock = threading.Lock()
        self._params = params.copy() if params is not None else None
        self._version = version

    def publish(self, params: ParameterSet, version: int) -> None:
        copy = params.copy()
        with self._lock:
            self._params, self._version = copy, version

    def latest(self):
        with self._lock:
            return self._params, self._version


@dataclass
class EpisodeStats:
    actor: int
    episode: int
    steps: int
    ret: float
    goals_for: int
    goals_against: int
    policy_version: int


class ActorLoop:
    """One actor: an environment, a behaviour policy and an opponent factory.

    ``opponent_fn(rng)`` returns the opponent agent for a new episode.
    Episodes continue across slice boundaries; a new episode inside a slice
    is marked by ``start`` and the previous step carries discount 0.
    """

    def __init__(
        self,
        actor_id: int,
        config: ExperimentConfig,
        stage: str,
        source: PolicySource,
        network: PolicyNetwork,
        length: int,
        opponent_fn=None,
        scenes=None,
        seed: int | None = None,
        agent_fn=None,
        record_state: bool = True,
    ):
        self.actor_id = actor_id
        self.config = config
        self.source = source
        self.network = network
        self.length = length
        self.env = SoccerEnv(config, stage, scenes)
        self.opponent_fn = opponent_fn or (lambda rng: RandomAgent())
        self.agent_fn = agent_fn
        self.record_state = record_state  # False: h0/c0 stay zero (data for a different architecture)
        self.rng = make_rng(config.seed if seed is None else seed, "actor", actor_id)
        self.obs = None
        self.agent: Agent | None = None
        self.episodes = 0
        self.steps = 0
        self.faults = 0
        self.completed: deque = deque(maxlen=1000)
        self.lock = threading.Lock()
        self._ret = 0.0
        self._len = 0

    def _start_episode(self):
        if self.agent_fn is not None:
            self.agent, self.version = self.agent_fn(self.rng), -1
        else:
            params, self.version = self.source.latest()
            self.agent = NetworkAgent(params, self.network)
        self.obs = self.env.reset(self.rng, self.opponent_fn(self.rng))
        self._ret, self._len = 0.0, 0

    def _end_episode(self):
        score = self.env.world.score
        stats = EpisodeStats(self.actor_id, self.episodes, self._len, self._ret, score[0], score[1], self.version)
        with self.lock:
            self.completed.append(stats)
            self.episodes += 1
        self.obs = None
        return stats

    def recent(self) -> list:
        with self.lock:
            return list(self.completed)

    def next_slice(self) -> TrajectorySlice:
        slc = empty_slice(self.length, self.network.config.lstm_width)
        A = slc.arrays
        for t in range(self.length):
            start = self.obs is None
            if start:
                self._start_episode()
            if t == 0 and self.record_state:
                state = getattr(self.agent, "state", None)
                if state is not None:
                    A["h0"][:] = state[0][0]
                    A["c0"][:] = state[1][0]
            obs = self.obs
            a, info = self.agent.act(obs, self.rng)
            try:
                nxt, r, comps, done, _ = self.env.step(a, self.rng)
            except SimulationFault as exc:
                # env faults end the episode; the step is recorded as terminal with zero reward
                log.warning("actor %d: episode %d aborted: %s", self.actor_id, self.episodes, exc)
                self.faults += 1
                nxt, r, comps, done = None, 0.0, None, True
            A["frame"][t] = obs["frame"]
            A["proprio"][t] = obs["proprio"]
            A["privileged"][t] = obs["privileged"]
            A["truth"][t] = obs["truth"]
            A["action"][t] = a
            if info is None:
                A["behavior_mean"][t] = a
                A["behavior_std"][t] = 1.0
                A["behavior_logp"][t] = -ACTION_LOGZ
            else:
                A["behavior_mean"][t] = info["mean"]
                A["behavior_std"][t] = info["std"]
                A["behavior_logp"][t] = info["logp"]
            A["reward"][t] = r
            A["reward_components"][t] = comps.as_array() if comps is not None else 0.0
            A["discount"][t] = 0.0 if done else 1.0
            A["start"][t] = start
            self._ret += r
            self._len += 1
            self.steps += 1
            if done:
                self._end_episode()
            else:
                self.obs = nxt
        return slc


ACTION_LOGZ = 6 * LOG_SQRT_2PI


def actor_loop(source: PolicySource, env_factory, sink, episode_budget: int, stop: threading.Event | None = None, gate=None) -> ActorLoop:
    """Run ``env_factory()`` (an ActorLoop) until ``episode_budget`` episodes finish.

    Slices go to ``sink.append``; when a ratio ``gate`` is given the actor
    waits for permission before each slice and reports its inserts.
    """
    actor = env_factory()
    while actor.episodes < episode_budget and not (stop is not None and stop.is_set()):
        if gate is not None:
            if not gate.wait_actor(timeout=0.5):
                if gate.closed:
                    break
                continue
        slc = actor.next_slice()
        sink.append(slc)
        if gate is not None:
            gate.record_insert(actor.length)
    return actor


def running_mean_return(actors, window: int = 20) -> float | None:
    recent = []
    for a in actors:
        recent.extend(a.recent())
    if not recent:
        return None
    recent.sort(key=lambda s: (s.episode, s.actor))
    vals = [s.ret for s in recent[-window:]]
    out = float(np.mean(vals))
    return out if math.isfinite(out) else None
