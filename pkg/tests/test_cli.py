import csv
import json
import signal
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from pitchlab.cli import main, render_preview
from pitchlab.config import ExperimentConfig, parse_config_text
from pitchlab.diffnet import PolicyNetwork
from pitchlab.orchestrate import SnapshotStore, snapshot_metadata

TINY = [
    "--set", "orchestrate.num_actors=2",
    "--set", "learner.batch_size=2",
    "--set", "learner.action_samples=4",
    "--set", "replay.capacity=64",
    "--set", "orchestrate.eval_every=1000000",
    "--set", "network.observation=state",
]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def state_snapshot(tmp_path_factory):
    cfg = ExperimentConfig().network
    store = SnapshotStore(tmp_path_factory.mktemp("exp") / "snapshots")
    store.write(PolicyNetwork(cfg, "state").init(np.random.default_rng(0)), 0, "scorer", snapshot_metadata(cfg, "state"))
    return store.directory / "latest"


# -- error paths ----------------------------------------------------------------------


def test_unknown_flag_prints_usage(capsys):
    code, out, err = run(capsys, "render-preview", "--bogus")
    assert code != 0
    assert "usage:" in out
    assert len(err.strip().splitlines()) == 1 and "--bogus" in err


def test_unknown_subcommand(capsys):
    code, out, err = run(capsys, "fly")
    assert code != 0 and len(err.strip().splitlines()) == 1


def test_invalid_config_key_is_named(capsys, tmp_path):
    code, _, err = run(capsys, "render-preview", "--out", str(tmp_path), "--set", "learner.warp_speed=9")
    assert code != 0
    assert err.strip().splitlines() == [err.strip()] and "learner.warp_speed" in err


def test_invalid_key_in_config_file(capsys, tmp_path):
    (tmp_path / "c.toml").write_text("seed = 3\n[sim]\nfoo = 1\n")
    code, _, err = run(capsys, "render-preview", "--config", str(tmp_path / "c.toml"), "--out", str(tmp_path))
    assert code != 0 and "sim.foo" in err and len(err.strip().splitlines()) == 1


def test_missing_teacher_path_is_named(capsys, tmp_path):
    code, _, err = run(capsys, "train-distill", "--teachers", str(tmp_path / "g.psnap"), str(tmp_path / "s.psnap"), "--out", str(tmp_path / "x"))
    assert code != 0 and str(tmp_path / "g.psnap") in err and len(err.strip().splitlines()) == 1


def test_missing_dataset_path_is_named(capsys, tmp_path):
    missing = tmp_path / "none.raed"
    code, _, err = run(capsys, "train-expert", "--kind", "scorer", "--offline-data", str(missing), "--out", str(tmp_path / "x"), *TINY)
    assert code != 0 and str(missing) in err and len(err.strip().splitlines()) == 1


def test_missing_policy_is_named(capsys, tmp_path):
    code, _, err = run(capsys, "eval-gaze", "--policy", str(tmp_path / "nothing"), "--out", str(tmp_path))
    assert code != 0 and "nothing" in err and len(err.strip().splitlines()) == 1


# -- config resolution ----------------------------------------------------------------


def test_effective_config_written_with_annotations(capsys, tmp_path):
    code, *_ = run(capsys, "render-preview", "--out", str(tmp_path), "--steps", "1", "--seed", "5", "--set", "sim.kick_range=0.3")
    assert code == 0
    text = (tmp_path / "config.toml").read_text()
    flat = parse_config_text(text)
    assert flat["seed"] == 5 and flat["sim.kick_range"] == 0.3
    lines = {l.split(" = ")[0]: l for l in text.splitlines() if " = " in l}
    assert "non_paper_default = true" in lines["sim.episode_seconds"]
    assert "non_paper_default" not in lines["sim.kick_range"]  # overridden
    assert "non_paper_default" not in lines["learner.discount"]  # paper value


def test_environment_overrides(capsys, tmp_path, monkeypatch):
    cfg_file = tmp_path / "c.toml"
    cfg_file.write_text("[sim]\nkick_range = 0.2\n")
    monkeypatch.setenv("PITCHLAB_CONFIG", str(cfg_file))
    monkeypatch.setenv("PITCHLAB_SEED", "42")
    code, *_ = run(capsys, "render-preview", "--out", str(tmp_path / "o"), "--steps", "1")
    assert code == 0
    flat = parse_config_text((tmp_path / "o" / "config.toml").read_text())
    assert flat["seed"] == 42 and flat["sim.kick_range"] == 0.2
    code, *_ = run(capsys, "render-preview", "--out", str(tmp_path / "p"), "--steps", "1", "--seed", "7")
    assert parse_config_text((tmp_path / "p" / "config.toml").read_text())["seed"] == 7


def test_replay_flags_map_to_config(capsys, tmp_path):
    code, *_ = run(capsys, "train-expert", "--kind", "scorer", "--steps", "0", "--mix-ratio", "0.25", "--replay-capacity", "128", "--out", str(tmp_path), *TINY)
    assert code == 0
    flat = parse_config_text((tmp_path / "config.toml").read_text())
    assert flat["replay.mix_ratio"] == 0.25 and flat["replay.capacity"] == 128 and flat["orchestrate.learner_steps"] == 0


# -- render preview -------------------------------------------------------------------


def test_render_preview_triplets(capsys, tmp_path):
    code, out, _ = run(capsys, "render-preview", "--out", str(tmp_path), "--steps", "10")
    assert code == 0
    data = np.load(tmp_path / "preview" / "preview.npz")
    for k in ("raw", "calibrated", "augmented"):
        assert data[k].shape == (10, 30, 40, 3) and data[k].dtype == np.uint8
    assert len(list((tmp_path / "preview").glob("step_*.ppm"))) == 10
    assert json.loads(out)["triplets"] == 10


def test_render_preview_deterministic(tmp_path):
    cfg = ExperimentConfig().with_overrides({"seed": 3})
    a = render_preview(cfg, steps=4, out_dir=tmp_path / "a")
    b = render_preview(cfg, steps=4, out_dir=tmp_path / "b")
    c = render_preview(cfg.with_overrides({"seed": 4}), steps=4, out_dir=tmp_path / "c")
    for k in a:
        assert np.array_equal(a[k], b[k])
    assert not np.array_equal(a["augmented"], c["augmented"])
    assert (tmp_path / "a" / "step_002.ppm").read_bytes() == (tmp_path / "b" / "step_002.ppm").read_bytes()


# -- training -------------------------------------------------------------------------


def test_train_expert_reruns_bit_exact(capsys, tmp_path):
    for d in ("a", "b"):
        code, *_ = run(capsys, "train-expert", "--kind", "scorer", "--steps", "4", "--out", str(tmp_path / d), *TINY)
        assert code == 0
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert len(a.splitlines()) == 5


def test_train_expert_resumes(capsys, tmp_path):
    out = str(tmp_path / "r")
    assert run(capsys, "train-expert", "--kind", "getup", "--steps", "2", "--out", out, *TINY)[0] == 0
    assert run(capsys, "train-expert", "--kind", "getup", "--steps", "4", "--out", out, *TINY)[0] == 0
    rows = list(csv.DictReader(open(Path(out) / "metrics.csv")))
    assert [int(r["step"]) for r in rows] == [1, 2, 3, 4]


def test_signal_checkpoints_and_exits_cleanly(tmp_path):
    out = tmp_path / "sig"
    cmd = [sys.executable, "-m", "pitchlab", "train-expert", "--kind", "scorer", "--steps", "100000", "--out", str(out), *TINY]
    proc = subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    deadline = time.monotonic() + 240
    metrics = out / "metrics.csv"
    while time.monotonic() < deadline:
        if metrics.is_file() and len(metrics.read_text().splitlines()) > 2:
            break
        time.sleep(0.5)
    proc.send_signal(signal.SIGTERM)
    stdout, stderr = proc.communicate(timeout=240)
    assert proc.returncode == 0, stderr
    assert stderr == ""
    assert "interrupted" in stdout
    state = json.loads((out / "checkpoint" / "state.json").read_text())
    assert state["stage"] == "scorer"
    done = len(metrics.read_text().splitlines()) - 1
    assert 2 <= done < 100000


# -- data and evaluation --------------------------------------------------------------


def test_export_then_inspect(capsys, tmp_path, state_snapshot):
    ds = tmp_path / "d.raed"
    code, out, err = run(capsys, "export-data", "--policy", str(state_snapshot), "--output", str(ds), "--episodes", "1", "--stage", "scorer", "--out", str(tmp_path), "--set", "sim.episode_seconds=2.5")
    assert code == 0, err
    n = json.loads(out)["records"]
    assert n >= 2
    code, out, _ = run(capsys, "replay-inspect", str(ds), "--records", "1")
    lines = [json.loads(l) for l in out.strip().splitlines()]
    assert lines[0]["records"] == n and lines[0]["length"] == 48 and lines[0]["skipped"] == 0
    assert lines[1]["has_state"] is False  # state policies do not export recurrent state


def test_eval_setpieces_table(capsys, tmp_path, state_snapshot):
    code, out, err = run(
        capsys, "eval-setpieces", "--policy", f"net={state_snapshot}", "scripted", "--trials", "2", "--scoring-trials", "2",
        "--out", str(tmp_path), "--set", "eval.setpiece_timeout=2", "--set", "eval.penalty_seconds=2",
    )
    assert code == 0, err
    rows = list(csv.DictReader(open(tmp_path / "report" / "table1.csv")))
    assert {(r["metric"], r["policy"]) for r in rows} == {(m, p) for m in ("walking_speed", "turning_speed", "kicking_power", "penalty") for p in ("net", "scripted")}
    assert all(r["trials"] == "2" for r in rows)
    assert (tmp_path / "report" / "manifest.json").is_file()


def test_eval_gaze(capsys, tmp_path):
    code, out, err = run(capsys, "eval-gaze", "--policy", "scripted", "--episodes", "2", "--steps", "20", "--out", str(tmp_path))
    assert code == 0, err
    res = json.loads(out)
    assert res["median_controlled"] <= res["median_fixed"]
    assert (tmp_path / "report" / "gaze_policy.svg").is_file()


def test_probe_command(capsys, tmp_path, state_snapshot):
    code, out, err = run(capsys, "probe", "--policy", str(state_snapshot), "--episodes", "12", "--steps", "8", "--out", str(tmp_path), "--set", "probes.steps=10")
    assert code == 0, err
    rows = list(csv.DictReader(open(tmp_path / "probes" / "probe_metrics.csv")))
    assert len(rows) == 8  # 3 targets + permuted control, two visibility rows each


def test_probe_needs_ten_trajectories(capsys, tmp_path, state_snapshot):
    code, _, err = run(capsys, "probe", "--policy", str(state_snapshot), "--episodes", "5", "--steps", "4", "--out", str(tmp_path))
    assert code != 0 and "10" in err and len(err.strip().splitlines()) == 1


@pytest.mark.slow
def test_ablate_datasource_smoke(capsys, tmp_path):
    args = [
        "ablate-datasource", "--source-steps", "1", "--target-steps", "1", "--export-episodes", "1", "--out", str(tmp_path),
        "--set", "orchestrate.num_actors=1", "--set", "learner.batch_size=1", "--set", "learner.action_samples=2",
        "--set", "replay.capacity=16", "--set", "sim.episode_seconds=4", "--set", "orchestrate.eval_every=1",
        "--set", "orchestrate.eval_episodes=1", "--set", "orchestrate.snapshot_period=1",
    ]
    code, out, err = run(capsys, *args)
    assert code == 0, err
    curves = list(csv.DictReader(open(tmp_path / "ablation" / "curves.csv")))
    assert {r["run"] for r in curves} == {"scratch", "state_sourced", "vision_sourced"}
