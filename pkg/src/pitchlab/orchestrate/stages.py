"""The two-stage workflow: experts, distillation with curriculum and data reuse, and the data-source ablation."""

from __future__ import annotations

import dataclasses
import enum
import logging
from pathlib import Path

from ..config import ExperimentConfig, make_rng
from ..errors import ConfigError, SnapshotLoadError
from ..learner import TeacherSet, load_teacher
from ..replay import DatasetWriter, import_dataset
from .actor import ActorLoop, PolicySource
from .agents import NetworkAgent
from .harness import Trainer, default_opponent, stage_length
from .snapshots import SnapshotStore, load_snapshot, resolve_snapshot

log = logging.getLogger(__name__)


class StageKind(str, enum.Enum):
    EXPERT_GETUP = "getup"
    EXPERT_SCORER = "scorer"
    DISTILL = "distill"

    @classmethod
    def parse(cls, value) -> "StageKind":
        if isinstance(value, cls):
            return value
        v = str(value).lower().replace("-", "_")
        aliases = {"expertgetup": "getup", "expert_getup": "getup", "expertscorer": "scorer", "expert_scorer": "scorer"}
        try:
            return cls(aliases.get(v, v))
        except ValueError:
            raise ConfigError(f"unknown stage kind: {value!r}") from None


def _out(config: ExperimentConfig, out_dir) -> Path:
    return Path(out_dir or config.output_dir)


def run_stage1(kind, config: ExperimentConfig, out_dir=None, resume: bool = True, stop=None, learner_steps=None) -> SnapshotStore:
    """Train the get-up expert (fallen starts, idle opponent) or the scorer (random opponent)."""
    kind = StageKind.parse(kind)
    if kind is StageKind.DISTILL:
        raise ConfigError("run_stage1 trains experts; use run_stage2 for distillation")
    trainer = Trainer(config, kind.value, _out(config, out_dir), resume=resume)
    summary = trainer.run(learner_steps=learner_steps, stop=stop)
    log.info("stage 1 %s finished: %s", kind.value, summary)
    trainer.last_summary = summary
    return trainer.store


def load_stage_teachers(paths, config: ExperimentConfig) -> TeacherSet:
    """Get-up teacher (compared on fallen states) then scorer (upright states)."""
    paths = list(paths)
    if len(paths) != 2:
        raise ConfigError(f"distillation needs two teacher snapshots (get-up, scorer), got {len(paths)}")
    lc = config.learner
    out = []
    for name, states, p in (("getup", "fallen", paths[0]), ("scorer", "upright", paths[1])):
        try:
            path = resolve_snapshot(p)
        except SnapshotLoadError as exc:
            raise SnapshotLoadError(f"missing teacher snapshot: {p}") from exc
        out.append(load_teacher(path, name, config.network, lc.distill_init_coef, lc.distill_return_threshold, states))
    return TeacherSet(out)


def load_offline(paths, config: ExperimentConfig, length: int) -> list:
    return [import_dataset(p, length, config.network.lstm_width) for p in paths]


def run_stage2(teachers, store: SnapshotStore | None, offline_datasets, config: ExperimentConfig, out_dir=None, resume: bool = True, stop=None, learner_steps=None, require_teachers: bool = True) -> SnapshotStore:
    """Distil the experts into one full-game agent with the opponent curriculum and replay across experiments.

    ``teachers`` is a TeacherSet or a pair of snapshot paths; ``offline_datasets``
    are RAED paths or opened DatasetFiles with the stage-2 slice length.
    """
    if teachers is None or isinstance(teachers, (list, tuple)):
        teachers = load_stage_teachers(teachers or config.orchestrate.teachers, config) if (teachers or require_teachers) else TeacherSet()
    if require_teachers and len(teachers) != 2:
        raise ConfigError("distillation requires both teachers")
    L = stage_length(config, "distill")
    offline = [d if hasattr(d, "skipped") else import_dataset(d, L, config.network.lstm_width) for d in (offline_datasets or [])]
    out = _out(config, out_dir)
    trainer = Trainer(config, "distill", out, teachers=teachers, offline=offline, store=store, resume=resume)
    summary = trainer.run(learner_steps=learner_steps, stop=stop)
    log.info("stage 2 finished: %s", summary)
    trainer.store.last_summary = summary
    return trainer.store


def generate_dataset(snapshot_path, config: ExperimentConfig, path, episodes: int, stage: str = "distill", length: int | None = None, record_state: bool | None = None, opponent_fn=None) -> int:
    """Play ``episodes`` with a stored policy and write the rendered slices to a RAED file.

    Used to turn a privileged-state agent's gameplay into pixel data: the
    camera renders every step whatever the acting policy consumes.  The
    recurrent state is only recorded when the acting network is a vision
    policy (a state policy's LSTM state means nothing to a vision learner).
    """
    snap = load_snapshot(snapshot_path)
    p, params = snap.path, snap.load()
    net = snap.network(config.network)
    L = length or stage_length(config, stage)
    if record_state is None:
        record_state = net.observation == "vision"
    store = SnapshotStore(p.parent) if stage == "distill" else None
    opp = opponent_fn or default_opponent(stage, config, store)
    source = PolicySource(params, snap.index)
    actor = ActorLoop(0, config, stage, source, net, L, opp, seed=int(make_rng(config.seed, "export").integers(2**31)), record_state=record_state)
    with DatasetWriter(path, L, config.network.lstm_width, experiment_id=f"{p.parent.parent.name}/{p.name}") as w:
        while actor.episodes < episodes:
            w.write(actor.next_slice())
    return w.count


def run_datasource_ablation(config: ExperimentConfig, out_dir=None, source_steps: int | None = None, target_steps: int | None = None, export_episodes: int = 20, stop=None) -> dict:
    """Scratch vs state-sourced vs vision-sourced replay data for the stage-2 game.

    1. train a privileged-state policy and a vision policy on the stage-2 game;
    2. replay their gameplay through the camera into RAED datasets;
    3. train three fresh vision agents at matched budgets: no offline data,
       state-sourced data and vision-sourced data.

    Returns the three evaluation curves keyed by label.  Teachers are used
    when configured; otherwise the stage-2 runs train without distillation.
    """
    from ..learner import read_metrics

    out = _out(config, out_dir) / "ablation"
    out.mkdir(parents=True, exist_ok=True)
    teachers = load_stage_teachers(config.orchestrate.teachers, config) if config.orchestrate.teachers else TeacherSet()
    L = stage_length(config, "distill")
    src_steps = source_steps if source_steps is not None else config.orchestrate.learner_steps
    tgt_steps = target_steps if target_steps is not None else config.orchestrate.learner_steps

    datasets = {}
    for label, obs in (("state", "state"), ("vision", "vision")):
        cfg = config.with_overrides({"network.observation": obs, "replay.mix_ratio": 0.0})
        src = out / f"source_{label}"
        store = run_stage2(teachers, None, [], cfg, src, stop=stop, learner_steps=src_steps, require_teachers=False)
        ds = out / "datasets" / f"{label}_sourced.raed"
        if not ds.is_file():
            generate_dataset(store.latest().path, cfg, ds, export_episodes)
        datasets[label] = ds

    curves = {}
    runs = (("scratch", [], 0.0), ("state_sourced", [datasets["state"]], -1.0), ("vision_sourced", [datasets["vision"]], -1.0))
    for label, data, mix in runs:
        cfg = config.with_overrides({"network.observation": "vision", "replay.mix_ratio": mix, "seed": config.seed + 1})
        run_dir = out / label
        run_stage2(teachers, None, data, cfg, run_dir, stop=stop, learner_steps=tgt_steps, require_teachers=False)
        rows = read_metrics(run_dir / "eval.csv") if (run_dir / "eval.csv").is_file() else []
        curves[label] = [(int(r["step"]), float(r["mean_return"])) for r in rows if "mean_return" in r]
    _write_curves(out / "curves.csv", curves)
    return curves


def _write_curves(path: Path, curves: dict) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "step", "eval_return"])
        for label, pts in curves.items():
            for s, v in pts:
                w.writerow([label, s, repr(v)])


def with_stage_defaults(config: ExperimentConfig, stage) -> ExperimentConfig:
    """Learner trajectory length matched to the stage (48 experts, 145 distillation)."""
    stage = StageKind.parse(stage)
    L = stage_length(config, stage.value)
    return dataclasses.replace(config, learner=dataclasses.replace(config.learner, trajectory_length=L))
