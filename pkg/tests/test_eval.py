import csv
import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from pitchlab.config import ExperimentConfig
from pitchlab.diffnet import PolicyNetwork
from pitchlab.errors import EvaluationConfigError
from pitchlab.eval import (
    SET_PIECES,
    SetPieceResult,
    compare_state_vs_vision,
    emit_report,
    eval_env,
    gaze_rollout,
    on_par,
    parse_kind,
    read_trials_csv,
    run_gaze_study,
    run_set_piece,
    run_set_pieces,
    svg_histogram,
    svg_line_chart,
    table_rows,
    write_trials_csv,
)
from pitchlab.orchestrate import SnapshotStore, StillAgent, snapshot_metadata
from pitchlab.sim import ScenarioKind

FAST = ExperimentConfig().with_overrides({"eval.setpiece_timeout": 6.0, "eval.scoring_trials": 6})


@pytest.fixture(scope="module")
def snapshot(tmp_path_factory):
    cfg = ExperimentConfig().network
    net = PolicyNetwork(cfg, "state")
    store = SnapshotStore(tmp_path_factory.mktemp("snaps"))
    store.write(net.init(np.random.default_rng(0)), 0, "scorer", snapshot_metadata(cfg, "state"))
    return store.directory / "latest"


@pytest.fixture(scope="module")
def scripted_results():
    return run_set_pieces("scripted", FAST, trials=3)


# -- set pieces -----------------------------------------------------------------------


def test_stderr_is_sample_std_over_sqrt_n():
    r = SetPieceResult("walking_speed", np.array([0.1, 0.3, 0.2, 0.6]))
    assert r.mean == pytest.approx(0.3)
    assert r.stderr == pytest.approx(np.std(r.values, ddof=1) / 2.0, abs=1e-15)
    assert SetPieceResult("penalty", np.array([1.0])).stderr == 0.0


def test_never_move_policy_has_zero_speeds():
    for kind in ("walking_speed", "turning_speed", "kicking_power"):
        r = run_set_piece("still", kind, 2, config=FAST)
        assert r.mean == 0.0 and r.stderr == 0.0


def test_parse_kind():
    assert parse_kind("walking") == "walking_speed"
    assert parse_kind(ScenarioKind.PENALTY) == "penalty"
    for bad in ("gaze_tracking", "full_game", "dribbling"):
        with pytest.raises(EvaluationConfigError):
            parse_kind(bad)
    with pytest.raises(EvaluationConfigError):
        run_set_piece("still", "walking", 0, config=FAST)


def test_default_trial_counts():
    cfg = ExperimentConfig()
    assert cfg.eval.trials == 10 and cfg.eval.scoring_trials == 250


def test_scripted_agent_is_agile(scripted_results):
    r = scripted_results
    assert r["walking_speed"].mean > 0.2
    assert r["turning_speed"].mean > 1.0
    assert r["kicking_power"].mean > 0.0
    assert set(r) == set(SET_PIECES)


def test_penalty_value_is_goal_crossing(scripted_results):
    cfg = FAST.sim
    res = scripted_results["penalty"]
    assert res.trials == 6 and res.values.sum() >= 1
    for t in res.traces:
        assert t.duration <= FAST.eval.penalty_seconds + 1e-9
        if t.value:
            # play restarts from the centre on the goal step; the step before sits on the line
            last = t.ball_path[-2]
            assert last[0] > cfg.length / 2 - 0.25 and abs(last[1]) < cfg.goal_width / 2
            assert np.allclose(t.ball_path[-1], 0.0)
        else:
            assert np.all(t.ball_path[:, 0] < cfg.length / 2)


def test_walking_stops_within_kick_range(scripted_results):
    for t in scripted_results["walking_speed"].traces:
        assert t.duration < FAST.eval.setpiece_timeout - 1e-6
        assert math.dist(t.agent_path[-1], t.ball_path[-1]) <= FAST.sim.kick_range
        assert math.dist(t.agent_path[-2], t.ball_path[-2]) > FAST.sim.kick_range


def test_scripted_baseline_is_deterministic(scripted_results):
    again = run_set_pieces("scripted", FAST, trials=3)
    for k in SET_PIECES:
        assert np.array_equal(again[k].values, scripted_results[k].values)


def test_snapshot_policy_reproducible(snapshot):
    a = run_set_piece(snapshot, "walking", 2, seed=7, config=FAST)
    b = run_set_piece(str(snapshot), "walking", 2, seed=7, config=FAST)
    c = run_set_piece(snapshot, "walking", 2, seed=8, config=FAST)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_table_recomputes_from_trials_csv(tmp_path, scripted_results):
    results = {"scripted": scripted_results}
    write_trials_csv(tmp_path / "t.csv", results)
    back = read_trials_csv(tmp_path / "t.csv")
    for row_a, row_b in zip(table_rows(results), table_rows(back)):
        assert row_a == row_b


# -- gaze study -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def gaze():
    return run_gaze_study("scripted", config=FAST, episodes=3, steps=40)


def test_gaze_shapes_and_range(gaze):
    assert gaze.controlled.shape == gaze.fixed.shape == (3, 40)
    for arr in (gaze.controlled, gaze.fixed):
        assert np.all((arr >= 0) & (arr <= math.pi))
    assert gaze.fov_half == pytest.approx(math.radians(FAST.render.fov_deg) / 2)
    d = ExperimentConfig().eval
    assert (d.gaze_episodes, d.gaze_steps) == (16, 100)


def test_gaze_matches_atan2_oracle(gaze):
    for cond in ("controlled", "fixed"):
        for e, rows in enumerate(gaze.traces[cond]):
            x, y, heading, pan, bx, by = rows.T
            ray = np.arctan2(np.sin(heading + pan), np.cos(heading + pan))
            bearing = np.arctan2(by - y, bx - x)
            oracle = np.abs(np.arctan2(np.sin(bearing - ray), np.cos(bearing - ray)))
            np.testing.assert_allclose(getattr(gaze, cond)[e], oracle, atol=1e-9, rtol=0)


def test_conditions_share_initial_worlds(gaze):
    for a, b in zip(gaze.traces["controlled"], gaze.traces["fixed"]):
        assert np.array_equal(a[0], b[0])


def test_head_tracking_beats_fixed_head(gaze):
    assert gaze.medians["controlled"] < gaze.medians["fixed"]


def test_fixed_head_lateral_ball_grows_until_bounce():
    env = eval_env(FAST, 10.0)
    rng = np.random.default_rng(0)
    obs = env.reset(rng, StillAgent(), ScenarioKind.GAZE_TRACKING, randomize=False)
    me = env.world.agents[0]
    env.world.ball_position = me.position + np.array([0.8, 0.0])
    env.world.ball_velocity = np.array([0.0, 3.0])
    dist, rows = gaze_rollout(env, StillAgent(FAST.sim), rng, 120, obs)
    back = np.flatnonzero(np.diff(rows[:, 5]) < 0)
    assert len(back), "the ball should reach the side wall"
    bounce = int(back[0])  # last step before the ball heads back
    assert bounce > 10
    assert np.all(np.diff(dist[: bounce + 1]) > 0)
    assert dist[bounce + 2] < dist[bounce]


def test_histograms(gaze):
    edges, hc, hf = gaze.histograms(18)
    assert len(edges) == 19 and edges[0] == 0 and edges[-1] == pytest.approx(math.pi)
    assert hc.sum() == hf.sum() == gaze.controlled.size


# -- reports --------------------------------------------------------------------------


def test_empty_report_is_header_only(tmp_path):
    files = emit_report({}, None, tmp_path)
    assert (tmp_path / "table1.csv").read_text().strip() == "metric,policy,mean,stderr,trials,unit"
    assert not list(tmp_path.glob("*.svg"))
    assert {p.name for p in files} == {"table1.csv", "manifest.json"}


def write_metrics(path, n=20):
    rng = np.random.default_rng(0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "env_steps", "running_return", "critic_loss", "temperature"])
        for s in range(1, n + 1):
            w.writerow([s, 16 * s, "nan" if s < 3 else rng.normal(), rng.uniform(), rng.uniform()])
    with open(path.with_name("eval.csv"), "w", newline="") as fh:
        fh.write("step,mean_return\n10,1.0\n20,2.5\n")
    return path


def test_full_report(tmp_path, scripted_results, gaze):
    other = {k: SetPieceResult(k, v.values * 0.5) for k, v in scripted_results.items()}
    results = {"scripted": scripted_results, "half": other}
    metrics = write_metrics(tmp_path / "metrics.csv")
    out = tmp_path / "report"
    files = emit_report(results, metrics, out, gaze={"scripted": gaze}, config=FAST)
    rows = list(csv.DictReader(open(out / "table1.csv")))
    assert len(rows) == 2 * len(SET_PIECES)
    assert len({(r["metric"], r["policy"]) for r in rows}) == len(rows)
    svgs = list(out.glob("*.svg"))
    names = {p.name for p in svgs}
    assert {"curve_running_return.svg", "curve_eval_return.svg", "gaze_scripted.svg", "traces_scripted_penalty.svg"} <= names
    for p in svgs:
        assert ET.parse(p).getroot().tag.endswith("svg")
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["artifacts"]) == {p.name for p in files if p.name != "manifest.json"}
    assert manifest["config_digest"] == FAST.digest()
    assert "run" in manifest["metrics"]
    # deterministic file names and contents
    out2 = tmp_path / "report2"
    emit_report(results, metrics, out2, gaze={"scripted": gaze}, config=FAST)
    assert json.loads((out2 / "manifest.json").read_text())["artifacts"] == manifest["artifacts"]


def test_unwritable_report_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report({}, None, blocker / "report")


def test_svg_escapes_text():
    s = svg_line_chart({"a<b & c": ([0, 1], [1, 2]), "d": ([0, 1], [np.nan, 1])}, "x < y & z")
    ET.fromstring(s.split("\n", 1)[1])
    h = svg_histogram(np.linspace(0, 1, 5), {"p": [0, 0, 0, 0]}, 0.5, "empty")
    ET.fromstring(h.split("\n", 1)[1])


# -- comparison -----------------------------------------------------------------------


def test_compare_state_vs_vision_table(tmp_path, snapshot):
    res = compare_state_vs_vision(FAST, snapshot, "still", tmp_path, trials=2, kinds=("walking", "turning"))
    assert list(res) == ["state", "vision", "scripted"]
    rows = list(csv.DictReader(open(tmp_path / "comparison.csv")))
    assert [(r["metric"], r["policy"]) for r in rows] == [
        (m, p) for m in ("walking_speed", "turning_speed") for p in ("state", "vision", "scripted")
    ]
    assert res["vision"]["walking_speed"].mean == 0.0


def test_on_par():
    assert on_par(0.51, 0.52) and on_par(0.0, 0.0)
    assert not on_par(1.0, 0.8)
