"""Probe datasets from policy rollouts, probe fitting/evaluation and report files."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import ExperimentConfig, make_rng
from ..diffnet import ParameterSet, PolicyNetwork
from ..diffnet.tensor import no_grad
from ..errors import InsufficientDataError
from ..render import ball_visible
from ..sim import PitchGeometry, to_body_frame
from .mixture import TARGETS, ProbeHead, argmax_positions, heatmap, init_probe, predict, train_head, write_pgm

MIN_TRAJECTORIES = 10
_TRUTH_SLICES = {"self_position": slice(0, 2), "ball_position": slice(3, 5), "opponent_position": slice(5, 7)}


@dataclass
class ProbeTrajectory:
    """One evaluation episode: observations, ground truth and visibility per step."""

    obs: dict  # frame (T, 30, 40, 3), proprio (T, 9), privileged (T, 12)
    truth: np.ndarray  # (T, 7): self xy, heading, ball xy, opponent xy
    visible: np.ndarray  # (T,) ball inside the field of view and unoccluded
    kicked: np.ndarray  # (T,) agent kicked during the step that followed
    dt: float
    features: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.truth)


def targets_for(traj: ProbeTrajectory, target: str, frame: str = "global") -> np.ndarray:
    if target not in TARGETS:
        raise ValueError(f"unknown probe target {target!r}")
    xy = traj.truth[:, _TRUTH_SLICES[target]].astype(float)
    if frame == "egocentric" and target != "self_position":
        out = np.empty_like(xy)
        for t in range(len(xy)):
            out[t] = to_body_frame(xy[t], traj.truth[t, 0:2], traj.truth[t, 2])
        return out
    return xy


def collect_trajectories(params: ParameterSet, network: PolicyNetwork, config: ExperimentConfig, episodes: int, steps: int, opponent_fn=None, seed_name: str = "probes.collect", stage: str = "distill", keep_frames: bool = True) -> list:
    """Roll out the frozen policy and record everything a probe needs.

    Features are the policy's LSTM outputs at acting time, identical to a
    frozen forward pass over the episode from a zero state.
    """
    from ..orchestrate import NetworkAgent, RandomAgent, SoccerEnv

    env = SoccerEnv(config, stage, augment_frames=False)
    env.sim = dataclasses.replace(env.sim, episode_seconds=max(env.sim.episode_seconds, steps * env.sim.dt + 1))
    opponent_fn = opponent_fn or (lambda rng: RandomAgent())
    out = []
    for k in range(episodes):
        rng = make_rng(config.seed, seed_name, k)
        agent = NetworkAgent(params, network)
        obs = env.reset(rng, opponent_fn(rng))
        rec = {key: [] for key in ("frame", "proprio", "privileged")}
        truth, vis, kicked, feats = [], [], [], []
        for _ in range(steps):
            for key in rec:
                rec[key].append(obs[key])
            truth.append(obs["truth"])
            vis.append(ball_visible(env.world, 0, config.render))
            a, info = agent.act(obs, rng)
            feats.append(info["core"])
            obs, _, _, done, events = env.step(a, rng)
            kicked.append(any(e.kind == "kick" and e.agent == 0 for e in events))
            if done:
                break
        arrays = {key: (None if v[0] is None else np.stack(v)) for key, v in rec.items()}
        if not keep_frames and not agent.needs_frame:
            arrays["frame"] = None
        out.append(ProbeTrajectory(arrays, np.stack(truth), np.array(vis), np.array(kicked), env.sim.dt, np.stack(feats)))
    return out


def encode_features(params: ParameterSet, network: PolicyNetwork, traj: ProbeTrajectory) -> np.ndarray:
    """Frozen forward pass from a zero state: (T, lstm_width) features."""
    obs = {k: (None if v is None else np.asarray(v)[:, None]) for k, v in traj.obs.items()}
    with no_grad():
        P = params.tensors(requires_grad=False)
        _, _, core, _ = network.sequence(P, obs, network.zero_state(1))
    return core.data[:, 0]


def _ensure_features(params, network, trajectories):
    for tr in trajectories:
        if tr.features is None:
            tr.features = encode_features(params, network, tr)


def fit_probe(policy, trajectories, target: str, n_components: int | None = None, config: ExperimentConfig | None = None, rng=None, permute_labels: bool = False, history: list | None = None) -> ProbeHead:
    """Train one linear mixture head on frozen features of ``policy = (params, network)``.

    The policy parameters are checksummed before and after; probe training
    only ever holds the features as constants.
    """
    config = config or ExperimentConfig()
    pc = config.probes
    if len(trajectories) < MIN_TRAJECTORIES:
        raise InsufficientDataError(f"probe fitting needs at least {MIN_TRAJECTORIES} trajectories, got {len(trajectories)}")
    params, network = policy
    before = params.checksum()
    _ensure_features(params, network, trajectories)
    X = np.concatenate([t.features for t in trajectories])
    Y = np.concatenate([targets_for(t, target, pc.frame) for t in trajectories])
    rng = rng if rng is not None else make_rng(config.seed, "probes.fit", TARGETS.index(target))
    if permute_labels:
        Y = Y[rng.permutation(len(Y))]
    M = n_components or pc.n_components
    spread = float(np.abs(Y).max()) if len(Y) else 1.0
    head = init_probe(target, X.shape[1], M, rng, pc.std_floor, pc.frame, init_spread=min(spread, 2.5))
    head.params["probe.b"][M : 3 * M] += np.tile(Y.mean(axis=0), M).astype(np.float32)
    train_head(head, X, Y, pc, rng, history=history)
    if params.checksum() != before:
        raise RuntimeError("probe training modified the policy parameters")
    return head


def eval_probe(head: ProbeHead, trajectories, pitch: PitchGeometry | None = None, resolution=(100, 80)) -> dict:
    """NLL and argmax error, overall and split by ball visibility.

    Returns ``{"all": {...}, "in_view": {...}, "out_of_view": {...}, "rows": [...]}``
    where rows are per-step trace records.
    """
    if any(t.features is None for t in trajectories):
        raise ValueError("trajectories have no features; fit_probe or encode_features first")
    pitch = pitch or PitchGeometry(5.0, 4.0, 1.6, 0.8)
    X = np.concatenate([t.features for t in trajectories])
    Y = np.concatenate([targets_for(t, head.target, head.frame) for t in trajectories])
    vis = np.concatenate([t.visible for t in trajectories])
    dens = predict(head, X)
    nll = -dens.log_prob(Y)
    if head.frame == "global" or head.target == "self_position":
        point = argmax_positions(dens, pitch, resolution)
    else:
        point = dens.mean_position()
    err = np.linalg.norm(point - Y, axis=1)
    out = {}
    for name, mask in (("all", np.ones_like(vis)), ("in_view", vis), ("out_of_view", ~vis)):
        n = int(mask.sum())
        out[name] = {
            "n": n,
            "nll": float(nll[mask].mean()) if n else float("nan"),
            "mean_error": float(err[mask].mean()) if n else float("nan"),
        }
    rows = []
    i = 0
    for e, t in enumerate(trajectories):
        for s in range(len(t)):
            rows.append({
                "episode": e, "time": round(s * t.dt, 6), "target": head.target,
                "argmax_x": point[i, 0], "argmax_y": point[i, 1], "truth_x": Y[i, 0], "truth_y": Y[i, 1],
                "nll": nll[i], "visible": bool(vis[i]),
            })
            i += 1
    out["rows"] = rows
    out["error"] = err
    return out


def kick_tracking(err, visible, kicked, dt: float, tol: float = 0.5, search_s: float = 1.0) -> list:
    """For each kick by the agent followed by the ball leaving view within
    ``search_s``: how long (s) the out-of-view prediction stays within ``tol``."""
    err, visible, kicked = np.asarray(err), np.asarray(visible, bool), np.asarray(kicked, bool)
    out = []
    horizon = int(round(search_s / dt))
    for k in np.flatnonzero(kicked):
        hidden = np.flatnonzero(~visible[k + 1 : k + 1 + horizon])
        if not len(hidden):
            continue
        j = k + 1 + hidden[0]
        n = 0
        while j + n < len(err) and not visible[j + n] and err[j + n] < tol:
            n += 1
        out.append(n * dt)
    return out


def write_trace_csv(path, rows) -> Path:
    path = Path(path)
    cols = ["episode", "time", "target", "argmax_x", "argmax_y", "truth_x", "truth_y", "nll", "visible"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return path


def write_metrics_csv(path, results: dict) -> Path:
    """One row per (target, visibility)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["target", "visibility", "n", "nll", "mean_error"])
        for target, res in results.items():
            for vis in ("in_view", "out_of_view"):
                m = res[vis]
                w.writerow([target, vis, m["n"], repr(m["nll"]), repr(m["mean_error"])])
    return path


def run_probe_study(policy, config: ExperimentConfig, out_dir, episodes: int | None = None, steps: int | None = None, heatmap_steps=(0, 50, 100), trajectories=None) -> dict:
    """Collect rollouts, fit heads for every target plus a permuted-label ball
    control, evaluate on held-out episodes and write CSVs and PGM heatmaps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pc = config.probes
    params, network = policy
    if trajectories is None:
        trajectories = collect_trajectories(params, network, config, episodes or pc.episodes, steps or pc.episode_steps, keep_frames=False)
    n_test = max(1, len(trajectories) // 5)
    train, test = trajectories[:-n_test], trajectories[-n_test:]
    pitch = PitchGeometry.from_config(config.sim)
    results, rows = {}, []
    for target in TARGETS:
        head = fit_probe(policy, train, target, config=config)
        res = eval_probe(head, test, pitch)
        rows.extend(res.pop("rows"))
        results[target] = res
        if target == "ball_position":
            ball_head = head
    control = fit_probe(policy, train, "ball_position", config=config, permute_labels=True)
    ctrl = eval_probe(control, test, pitch)
    ctrl.pop("rows")
    results["ball_position_permuted"] = ctrl
    write_metrics_csv(out / "probe_metrics.csv", results)
    write_trace_csv(out / "probe_trace.csv", rows)
    dens = predict(ball_head, test[0].features)
    for s in heatmap_steps:
        if s < len(dens):
            write_pgm(out / f"heatmap_ball_ep0_t{s:04d}.pgm", heatmap(dens[s], pitch).grid)
    vis = np.concatenate([t.visible for t in test])
    kicks = np.concatenate([t.kicked for t in test])
    err = results["ball_position"]["error"]
    # kicks near an episode boundary never straddle it: each episode is padded by a visible step
    bounds = np.cumsum([len(t) for t in test])[:-1]
    vis = vis.copy()
    vis[bounds - 1] = True
    durations = kick_tracking(err, vis, kicks, test[0].dt)
    summary = {
        target: {k: v for k, v in results[target].items() if k != "error"} for target in results
    }
    summary["kick_tracking"] = {
        "events": len(durations),
        "durations": durations,
        "fraction_ge_0.5s": float(np.mean([d >= 0.5 for d in durations])) if durations else float("nan"),
    }
    return summary
