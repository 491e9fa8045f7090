"""Actor/learner harness shared by every training stage.

Two schedulers drive the same components:

* serial (default): one thread interleaves actors and the learner.  The
  learner steps whenever the ratio gate permits, otherwise the next actor in
  round-robin order produces one slice.  Runs are bit-reproducible.
* threaded: one thread per actor plus the learner in the calling thread,
  coordinated only through the replay buffer and the ratio gate.

A checkpoint (learner state, gate counters, actor rng states) is written
with every snapshot and whenever a run stops, so a killed run resumes with
the same snapshot indices and counters.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import shutil
import threading
import time
from pathlib import Path

import numpy as np

from ..config import ExperimentConfig, make_rng
from ..errors import ConfigError, PitchlabError
from ..learner import MetricsWriter, MPOLearner, TeacherSet
from ..render import load_scene_variants
from ..replay import RatioGate, ReplayBuffer, export_dataset, resolve_mix_ratio, sample_batch
from .actor import ActorLoop, PolicySource, running_mean_return
from .agents import NetworkAgent, RandomAgent, StillAgent
from .games import play_games, summarize_games
from .snapshots import SnapshotStore, sample_opponent, snapshot_metadata

log = logging.getLogger(__name__)


def stage_length(config: ExperimentConfig, stage: str) -> int:
    o = config.orchestrate
    return o.distill_trajectory_length if stage == "distill" else o.expert_trajectory_length


class CurriculumOpponents:
    """Per-episode opponent drawn from the first quarter of a snapshot store."""

    def __init__(self, store: SnapshotStore, network_config, deterministic: bool = False):
        self.store = store
        self.network_config = network_config
        self.deterministic = deterministic
        self._cache: dict = {}
        self._lock = threading.Lock()

    def __call__(self, rng):
        snap = sample_opponent(self.store, rng)
        with self._lock:
            if snap.index not in self._cache:
                self._cache[snap.index] = (snap.load(), snap.network(self.network_config))
            params, net = self._cache[snap.index]
        agent = NetworkAgent(params, net, self.deterministic)
        agent.snapshot_index = snap.index
        return agent


def default_opponent(stage: str, config: ExperimentConfig, store: SnapshotStore):
    if stage == "getup":
        return lambda rng: StillAgent(config.sim)
    if stage == "scorer":
        return lambda rng: RandomAgent()
    return CurriculumOpponents(store, config.network)


def truncate_csv(path: Path, max_step: int) -> None:
    if not path.is_file():
        return
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return
    head, body = rows[0], rows[1:]
    i = head.index("step") if "step" in head else 0
    keep = [r for r in body if r and float(r[i]) <= max_step]
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows([head, *keep])


class Trainer:
    def __init__(
        self,
        config: ExperimentConfig,
        stage: str,
        out_dir=None,
        teachers: TeacherSet | None = None,
        offline=None,
        opponent_fn=None,
        store: SnapshotStore | None = None,
        resume: bool = True,
        scenes=None,
        eval_opponent_fn=None,
    ):
        if stage not in ("getup", "scorer", "distill"):
            raise ConfigError(f"unknown training stage: {stage!r}")
        self.config = config
        self.stage = stage
        self.out = Path(out_dir or config.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        config.write(self.out / "config.toml")
        self.length = stage_length(config, stage)
        lcfg = dataclasses.replace(config.learner, trajectory_length=self.length)
        self.learner = MPOLearner(lcfg, config.network, seed=config.seed, teachers=teachers, tilt_threshold=config.sim.tilt_fall_threshold)
        self.store = store or SnapshotStore(self.out / "snapshots")
        self.offline = list(offline or [])
        self.mix = resolve_mix_ratio(config.replay.mix_ratio, self.offline)
        self.buffer = ReplayBuffer(config.replay.capacity, self.length, config.network.lstm_width)
        self.gate = RatioGate(config.replay.samples_per_insert, config.replay.insert_slack * self.length)
        self.source = PolicySource(self.learner.policy_params, 0)
        self.scenes = scenes if scenes is not None else load_scene_variants(config.render.scene_dir or None, config.render.scene_variants)
        opp = opponent_fn or default_opponent(stage, config, self.store)
        self.eval_opponent_fn = eval_opponent_fn or (lambda rng: StillAgent(config.sim) if stage == "getup" else RandomAgent())
        self.actors = [
            ActorLoop(i, config, stage, self.source, self.learner.policy_net, self.length, opp, self.scenes)
            for i in range(config.orchestrate.num_actors)
        ]
        self.sample_rng = make_rng(config.seed, "replay.sample")
        self._next_actor = 0
        self.last_eval: dict = {}
        self.wall_time = 0.0
        ckpt = self.out / "checkpoint" / "state.json"
        if resume and ckpt.is_file():
            self._restore()
        else:
            if len(self.store) and store is None:
                raise ConfigError(f"{self.out} already holds snapshots; resume it or choose a new output directory")
            self.metrics = MetricsWriter(self.out / "metrics.csv", resume=False)
            self.eval_log = MetricsWriter(self.out / "eval.csv", resume=False)
            self.snapshot()  # index 1: the initial policy, so the curriculum pool is never empty

    # -- persistence -------------------------------------------------------------

    def snapshot(self):
        meta = snapshot_metadata(
            self.config.network,
            config_digest=self.config.digest(),
            running_return=running_mean_return(self.actors),
            env_steps=self.gate.env_steps,
            eval=self.last_eval,
        )
        return self.store.write(self.learner.policy_params, self.learner.steps, self.stage, meta)

    def checkpoint(self) -> Path:
        tmp = self.out / "checkpoint.tmp"
        if tmp.exists():
            shutil.rmtree(tmp)
        self.learner.save(tmp / "learner")
        state = {
            "stage": self.stage,
            "gate": self.gate.state_dict(),
            "snapshot_count": len(self.store),
            "sample_rng": self.sample_rng.bit_generator.state,
            "next_actor": self._next_actor,
            "wall_time": self.wall_time,
            "actors": [
                {
                    "episodes": a.episodes,
                    "steps": a.steps,
                    "rng": a.rng.bit_generator.state,
                    "completed": [dataclasses.asdict(s) for s in a.recent()[-50:]],
                }
                for a in self.actors
            ],
        }
        (tmp / "state.json").write_text(json.dumps(state, sort_keys=True))
        final = self.out / "checkpoint"
        if final.exists():
            shutil.rmtree(final)
        tmp.rename(final)
        return final

    def _restore(self):
        from .actor import EpisodeStats

        d = self.out / "checkpoint"
        state = json.loads((d / "state.json").read_text())
        if state["stage"] != self.stage:
            raise ConfigError(f"checkpoint in {self.out} belongs to stage {state['stage']!r}, not {self.stage!r}")
        self.learner.restore(d / "learner")
        self.gate.load_state_dict(state["gate"])
        self.sample_rng.bit_generator.state = state["sample_rng"]
        self._next_actor = state["next_actor"]
        self.wall_time = state.get("wall_time", 0.0)
        for a, s in zip(self.actors, state["actors"]):
            a.episodes, a.steps = s["episodes"], s["steps"]
            a.rng.bit_generator.state = s["rng"]
            a.completed.extend(EpisodeStats(**c) for c in s["completed"])
        # snapshots written after the checkpoint were never committed
        keep = state["snapshot_count"]
        for snap in list(self.store):
            if snap.index > keep:
                snap.path.unlink()
        self.store.refresh()
        if len(self.store):
            (self.store.directory / "latest").write_text(self.store.latest().path.name + "\n")
        truncate_csv(self.out / "metrics.csv", self.learner.steps)
        truncate_csv(self.out / "eval.csv", self.learner.steps)
        self.metrics = MetricsWriter(self.out / "metrics.csv", resume=True)
        self.eval_log = MetricsWriter(self.out / "eval.csv", resume=True)
        self.source.publish(self.learner.policy_params, self.learner.steps)
        log.info("resumed %s at learner step %d", self.out, self.learner.steps)

    def export_replay(self, path, experiment_id: str | None = None, zero_state: bool = False) -> int:
        slices = self.buffer.snapshot()
        if zero_state:
            slices = [_zero_state(s) for s in slices]
        return export_dataset(slices, path, self.length, self.config.network.lstm_width, experiment_id or f"{self.stage}:{self.out.name}")

    # -- scheduling ----------------------------------------------------------------

    def _learner_ready(self) -> bool:
        if not self.gate.learner_permitted():
            return False
        if self.mix < 1.0 and len(self.buffer) < max(1, self.config.orchestrate.min_replay_slices):
            return False
        return True

    def _learn(self) -> dict:
        batch = sample_batch(self.buffer, self.offline, self.mix, self.config.learner.batch_size, self.sample_rng)
        rr = running_mean_return(self.actors)
        self.learner.partial_fit(batch, rr)
        self.gate.record_update()
        steps = self.learner.steps
        self.source.publish(self.learner.policy_params, steps)
        m = dict(self.learner.metrics_)
        m.pop("step", None)
        row = {
            "step": steps,
            "env_steps": self.gate.env_steps,
            "episodes": sum(a.episodes for a in self.actors),
            "running_return": rr if rr is not None else math.nan,
            **m,
        }
        self.metrics.write(row)
        o = self.config.orchestrate
        if o.eval_every and steps % o.eval_every == 0:
            self.evaluate()
        if o.snapshot_period and steps % o.snapshot_period == 0:
            self.snapshot()
            self.checkpoint()
        return row

    def _produce(self, actor: ActorLoop) -> None:
        slc = actor.next_slice()
        self.buffer.append(slc)
        self.gate.record_insert(self.length)

    def evaluate(self, episodes: int | None = None) -> dict:
        cfg = self.config
        n = cfg.orchestrate.eval_episodes if episodes is None else episodes
        params = self.learner.policy_params.copy()
        net = self.learner.policy_net
        det = cfg.eval.deterministic_policy
        results = play_games(
            cfg, self.stage, lambda rng: NetworkAgent(params, net, det), self.eval_opponent_fn, n,
            seed_name=f"eval.train.{self.learner.steps}", scenes=self.scenes,
        )
        summary = summarize_games(results)
        self.last_eval = summary
        self.eval_log.write({"step": self.learner.steps, "env_steps": self.gate.env_steps, **summary})
        return summary

    def run(self, learner_steps: int | None = None, time_budget_s: float | None = None, stop: threading.Event | None = None) -> dict:
        o = self.config.orchestrate
        target = learner_steps if learner_steps is not None else o.learner_steps
        budget = o.time_budget_s if time_budget_s is None else time_budget_s
        t0 = time.monotonic()
        deadline = t0 + budget if budget and budget > 0 else math.inf
        stop = stop or threading.Event()
        try:
            if o.threaded:
                self._run_threaded(target, deadline, stop)
            else:
                self._run_serial(target, deadline, stop)
        except PitchlabError:
            self.wall_time += time.monotonic() - t0
            self.checkpoint()
            raise
        self.wall_time += time.monotonic() - t0
        self.checkpoint()
        return self.summary(time.monotonic() - t0)

    def _run_serial(self, target, deadline, stop):
        while self.learner.steps < target and not stop.is_set() and time.monotonic() < deadline:
            if self._learner_ready():
                self._learn()
            else:
                actor = self.actors[self._next_actor]
                self._next_actor = (self._next_actor + 1) % len(self.actors)
                self._produce(actor)

    def _run_threaded(self, target, deadline, stop):
        halt = threading.Event()
        errors = []
        min_slices = max(1, self.config.orchestrate.min_replay_slices)

        def act(actor):
            try:
                while not halt.is_set():
                    if len(self.buffer) >= min_slices and not self.gate.wait_actor(timeout=0.2):
                        continue
                    if halt.is_set():
                        break
                    self._produce(actor)
            except Exception as exc:  # surfaced in the learner thread
                errors.append(exc)
                halt.set()

        threads = [threading.Thread(target=act, args=(a,), daemon=True, name=f"actor-{a.actor_id}") for a in self.actors]
        for t in threads:
            t.start()
        try:
            while self.learner.steps < target and not stop.is_set() and time.monotonic() < deadline and not halt.is_set():
                if not self.gate.wait_learner(timeout=0.2):
                    continue
                if not self._learner_ready():
                    time.sleep(0.005)
                    continue
                self._learn()
        finally:
            halt.set()
            self.gate.close()
            for t in threads:
                t.join()
            self.gate.closed = False
        if errors:
            raise errors[0]

    def summary(self, elapsed: float | None = None) -> dict:
        return {
            "stage": self.stage,
            "learner_steps": self.learner.steps,
            "env_steps": self.gate.env_steps,
            "ratio": self.gate.measured_ratio(),
            "episodes": sum(a.episodes for a in self.actors),
            "snapshots": len(self.store),
            "replay_slices": len(self.buffer),
            "running_return": running_mean_return(self.actors),
            "elapsed_s": elapsed,
            "last_eval": self.last_eval,
        }


def _zero_state(slc):
    from ..replay import TrajectorySlice

    arrays = dict(slc.arrays)
    arrays["h0"] = np.zeros_like(arrays["h0"])
    arrays["c0"] = np.zeros_like(arrays["c0"])
    return TrajectorySlice(arrays)
