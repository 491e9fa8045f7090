"""Command-line entry point: ``pitchlab <subcommand> [options]``.

Every subcommand resolves the configuration (file from --config or
PITCHLAB_CONFIG, then PITCHLAB_SEED, then --set/--seed/--out and the
replay flags), writes it to ``<out>/config.toml`` and runs.  Failures exit
nonzero with a single diagnostic line on stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import signal
import sys
import threading
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config, make_rng
from .errors import ConfigError, PitchlabError

log = logging.getLogger("pitchlab")

EXIT_ERROR = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage text on stdout, one diagnostic line on stderr."""

    def error(self, message):
        self.print_usage(sys.stdout)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, training: bool = False) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="flat key = value config file (default: $PITCHLAB_CONFIG)")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key (repeatable)")
    g.add_argument("--seed", type=int, help="root seed (default: $PITCHLAB_SEED or the config)")
    g.add_argument("--out", help="experiment directory (config key output_dir)")
    if training:
        r = p.add_argument_group("replay")
        r.add_argument("--offline-data", nargs="+", metavar="RAED", help="datasets mixed into every batch")
        r.add_argument("--mix-ratio", type=float, help="offline fraction of each batch; negative picks the default")
        r.add_argument("--replay-capacity", type=int, help="online replay capacity in slices")
        p.add_argument("--steps", type=int, help="learner steps (orchestrate.learner_steps)")
        p.add_argument("--time-budget", type=float, help="wall-clock limit in seconds")
        p.add_argument("--fresh", action="store_true", help="do not resume from an existing checkpoint")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pitchlab", description="Egocentric-vision soccer: training, evaluation and analysis.")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress logging on stdout")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train-expert", help="stage 1: train the get-up or scorer expert")
    p.add_argument("--kind", required=True, choices=["getup", "scorer"])
    _common(p, training=True)

    p = sub.add_parser("train-distill", help="stage 2: distil both experts into one vision agent")
    p.add_argument("--teachers", nargs=2, metavar=("GETUP", "SCORER"), help="teacher snapshots (default: orchestrate.teachers)")
    _common(p, training=True)

    p = sub.add_parser("export-data", help="play a stored policy and write its slices to a RAED dataset")
    p.add_argument("--policy", required=True, help="snapshot file, snapshots dir or snapshots/latest")
    p.add_argument("--output", required=True, help="dataset path (.raed)")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--stage", default="distill", choices=["getup", "scorer", "distill"])
    _common(p)

    p = sub.add_parser("eval-setpieces", help="walking, turning, kicking and penalty benchmarks")
    p.add_argument("--policy", required=True, nargs="+", help="snapshot(s) or scripted/still/random; NAME=PATH to label")
    p.add_argument("--trials", type=int, help="agility trials (eval.trials)")
    p.add_argument("--scoring-trials", type=int, help="penalty trials (eval.scoring_trials)")
    p.add_argument("--kinds", nargs="+", default=["walking_speed", "turning_speed", "kicking_power", "penalty"])
    _common(p)

    p = sub.add_parser("eval-gaze", help="head-tracking study against a fixed head")
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--steps", type=int)
    _common(p)

    p = sub.add_parser("probe", help="fit and evaluate position probes on a frozen policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--steps", type=int)
    _common(p)

    p = sub.add_parser("ablate-datasource", help="scratch vs state-sourced vs vision-sourced replay data")
    p.add_argument("--source-steps", type=int)
    p.add_argument("--target-steps", type=int)
    p.add_argument("--export-episodes", type=int, default=20)
    _common(p)

    p = sub.add_parser("render-preview", help="dump raw, calibrated and augmented frames")
    p.add_argument("--scenario", default="full_game")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--policy", default="random", help="snapshot or scripted/still/random")
    _common(p)

    p = sub.add_parser("replay-inspect", help="summarise a RAED dataset")
    p.add_argument("path")
    p.add_argument("--records", type=int, default=0, help="also summarise the first N records")
    _common(p)
    return parser


def resolve_config(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    if args.out:
        overrides["output_dir"] = args.out
    if getattr(args, "offline_data", None):
        overrides["replay.offline_data"] = tuple(args.offline_data)
    if getattr(args, "mix_ratio", None) is not None:
        overrides["replay.mix_ratio"] = args.mix_ratio
    if getattr(args, "replay_capacity", None) is not None:
        overrides["replay.capacity"] = args.replay_capacity
    if getattr(args, "steps", None) is not None and args.command in ("train-expert", "train-distill"):
        overrides["orchestrate.learner_steps"] = args.steps
    if getattr(args, "time_budget", None) is not None:
        overrides["orchestrate.time_budget_s"] = args.time_budget
    if getattr(args, "trials", None) is not None:
        overrides["eval.trials"] = args.trials
    if getattr(args, "scoring_trials", None) is not None:
        overrides["eval.scoring_trials"] = args.scoring_trials
    return load_config(args.config, overrides, args.seed)


@contextlib.contextmanager
def _graceful_stop():
    """SIGINT/SIGTERM set a stop event; training loops check it, checkpoint and return."""
    stop = threading.Event()
    previous = {}

    def handler(signum, frame):
        stop.set()

    if threading.current_thread() is threading.main_thread():
        for sig in (signal.SIGINT, signal.SIGTERM):
            previous[sig] = signal.signal(sig, handler)
    try:
        yield stop
    finally:
        for sig, h in previous.items():
            signal.signal(sig, h)


def _out(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output_dir)


def _offline(cfg, stage):
    from .orchestrate import stage_length
    from .orchestrate.stages import load_offline

    return load_offline(cfg.replay.offline_data, cfg, stage_length(cfg, stage))


def _finish(kind, summary, stop) -> int:
    print(json.dumps({"command": kind, **{k: v for k, v in summary.items() if not isinstance(v, (list, dict))}}, default=str))
    if stop.is_set():
        print("interrupted: checkpoint written")
    return 0


# -- subcommands ----------------------------------------------------------------------


def cmd_train_expert(args, cfg, stop) -> int:
    from .orchestrate import Trainer

    trainer = Trainer(cfg, args.kind, _out(cfg), offline=_offline(cfg, args.kind), resume=not args.fresh)
    return _finish(args.command, trainer.run(stop=stop), stop)


def cmd_train_distill(args, cfg, stop) -> int:
    from .orchestrate import Trainer, load_stage_teachers

    paths = args.teachers or cfg.orchestrate.teachers
    if not paths:
        raise ConfigError("train-distill needs --teachers GETUP SCORER or orchestrate.teachers")
    teachers = load_stage_teachers(paths, cfg)
    trainer = Trainer(cfg, "distill", _out(cfg), teachers=teachers, offline=_offline(cfg, "distill"), resume=not args.fresh)
    return _finish(args.command, trainer.run(stop=stop), stop)


def cmd_export_data(args, cfg, stop) -> int:
    from .orchestrate import generate_dataset

    n = generate_dataset(args.policy, cfg, args.output, args.episodes, stage=args.stage)
    print(json.dumps({"command": args.command, "records": n, "path": str(args.output)}))
    return 0


def _labelled(policies):
    out = {}
    for p in policies:
        name, sep, path = p.partition("=")
        if sep:
            out[name] = path
        else:
            out[Path(p).parent.name if Path(p).name == "latest" else Path(p).stem or p] = p
    return out


def cmd_eval_setpieces(args, cfg, stop) -> int:
    from .eval import emit_report, run_set_pieces

    results = {name: run_set_pieces(path, cfg, kinds=args.kinds) for name, path in _labelled(args.policy).items()}
    files = emit_report(results, None, _out(cfg) / "report", config=cfg)
    for name, per_kind in results.items():
        for kind, r in per_kind.items():
            print(f"{name:>12s} {kind:>14s} {r.mean:.4f} +- {r.stderr:.4f} ({r.trials} trials)")
    print(f"wrote {files[0]}")
    return 0


def cmd_eval_gaze(args, cfg, stop) -> int:
    from .eval import emit_report, run_gaze_study

    res = run_gaze_study(args.policy, config=cfg, episodes=args.episodes, steps=args.steps)
    emit_report({}, None, _out(cfg) / "report", gaze={"policy": res}, config=cfg)
    print(json.dumps({"command": args.command, **{f"median_{k}": v for k, v in res.medians.items()}, "fov_half": res.fov_half}))
    return 0


def cmd_probe(args, cfg, stop) -> int:
    from .orchestrate import load_snapshot
    from .probes import run_probe_study

    snap = load_snapshot(args.policy)
    policy = (snap.load(), snap.network(cfg.network))
    summary = run_probe_study(policy, cfg, _out(cfg) / "probes", episodes=args.episodes, steps=args.steps)
    flat = {f"{t}.{v}.nll": summary[t][v]["nll"] for t in summary if t != "kick_tracking" for v in ("in_view", "out_of_view")}
    print(json.dumps({"command": args.command, **flat, "kick_events": summary["kick_tracking"]["events"]}))
    return 0


def cmd_ablate(args, cfg, stop) -> int:
    from .orchestrate import run_datasource_ablation

    curves = run_datasource_ablation(cfg, _out(cfg), args.source_steps, args.target_steps, args.export_episodes, stop=stop)
    final = {k: (v[-1][1] if v else None) for k, v in curves.items()}
    print(json.dumps({"command": args.command, "final_eval_return": final}))
    return 0


def write_ppm(path, image) -> Path:
    img = np.asarray(image, dtype=np.uint8)
    h, w, _ = img.shape
    path = Path(path)
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode() + img.tobytes())
    return path


def render_preview(config: ExperimentConfig, scenario: str = "full_game", steps: int = 10, policy="random", out_dir=None) -> dict:
    """Raw, calibrated and augmented egocentric frames for ``steps`` control steps.

    Writes preview.npz (three (steps, 30, 40, 3) uint8 arrays) and one
    side-by-side PPM per step.  Identical seeds give identical dumps.
    """
    from .eval import make_agent
    from .orchestrate import SoccerEnv
    from .orchestrate.env import calibration_for
    from .render import augment, calibrate_colors, render_egocentric

    out = Path(out_dir or _out(config) / "preview")
    out.mkdir(parents=True, exist_ok=True)
    env = SoccerEnv(config, "distill", augment_frames=False)
    rng = make_rng(config.seed, "preview")
    obs = env.reset(rng, scenario=scenario)
    agent = make_agent(policy, config)
    frames = {"raw": [], "calibrated": [], "augmented": []}
    for t in range(steps):
        raw = render_egocentric(env.world, 0, env.scene, env.render, env.sim)
        nerf, real = calibration_for(env.scene, env.render, env.sim)
        cal = np.rint(calibrate_colors(raw, nerf, real)).astype(np.uint8)
        aug = augment(cal, rng, env.augment_params)
        for k, f in zip(frames, (raw, cal, aug)):
            frames[k].append(np.asarray(f, dtype=np.uint8))
        write_ppm(out / f"step_{t:03d}.ppm", np.concatenate([raw, cal, aug], axis=1))
        a, _ = agent.act(obs, rng)
        obs, *_ = env.step(a, rng)
    arrays = {k: np.stack(v) for k, v in frames.items()}
    np.savez(out / "preview.npz", **arrays)
    return arrays


def cmd_render_preview(args, cfg, stop) -> int:
    arrays = render_preview(cfg, args.scenario, args.steps, args.policy)
    print(json.dumps({"command": args.command, "triplets": len(arrays["raw"]), "shape": list(arrays["raw"].shape[1:])}))
    return 0


def cmd_replay_inspect(args, cfg, stop) -> int:
    from .replay import import_dataset

    ds = import_dataset(args.path)
    info = {"path": str(args.path), "experiment_id": ds.experiment_id, "length": ds.length, "lstm_width": ds.lstm_width, "records": len(ds), "skipped": ds.skipped}
    print(json.dumps(info))
    for i in range(min(args.records, len(ds))):
        s = ds[i]
        r = s.arrays["reward"]
        print(json.dumps({"record": i, "reward_sum": float(np.sum(r)), "starts": int(np.sum(s.arrays["start"])), "has_state": bool(np.any(s.arrays["h0"]))}))
    return 0


COMMANDS = {
    "train-expert": cmd_train_expert,
    "train-distill": cmd_train_distill,
    "export-data": cmd_export_data,
    "eval-setpieces": cmd_eval_setpieces,
    "eval-gaze": cmd_eval_gaze,
    "probe": cmd_probe,
    "ablate-datasource": cmd_ablate,
    "render-preview": cmd_render_preview,
    "replay-inspect": cmd_replay_inspect,
}


def _diagnostic(msg) -> None:
    line = " ".join(str(msg).split()) or "failed"
    print(f"pitchlab: error: {line}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _diagnostic(exc)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO if args.verbose else logging.ERROR + 10)
    try:
        cfg = resolve_config(args)
        if args.command != "replay-inspect":
            cfg.write(_out(cfg) / "config.toml")
        with _graceful_stop() as stop:
            return COMMANDS[args.command](args, cfg, stop)
    except ConfigError as exc:
        _diagnostic(exc)
        return EXIT_USAGE
    except (PitchlabError, OSError, ValueError, KeyError) as exc:
        _diagnostic(exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
