"""Set-piece comparison of privileged-state, vision and scripted agents."""

from __future__ import annotations

from pathlib import Path

from ..config import ExperimentConfig
from .report import write_table_csv
from .setpieces import SET_PIECES, run_set_pieces, write_trials_csv


def _train(observation: str, config: ExperimentConfig, out_dir: Path, steps):
    from ..orchestrate import run_stage1

    cfg = config.with_overrides({"network.observation": observation})
    store = run_stage1("scorer", cfg, out_dir / observation, learner_steps=steps)
    return store.latest().path


def compare_state_vs_vision(config: ExperimentConfig, state_policy=None, vision_policy=None, out_dir=None, trials: int | None = None, train_steps: int | None = None, kinds=SET_PIECES) -> dict:
    """Every set piece for the state policy, the vision policy and the scripted controller.

    Policies are snapshot paths (or agents); a missing one is trained here as
    a scorer expert with the matching observation.  Returns
    {policy: {kind: SetPieceResult}} and, with ``out_dir``, writes
    comparison.csv and the per-trial values.
    """
    out = Path(out_dir or config.output_dir)
    if state_policy is None:
        state_policy = _train("state", config, out, train_steps)
    if vision_policy is None:
        vision_policy = _train("vision", config, out, train_steps)
    results = {}
    for name, pol in (("state", state_policy), ("vision", vision_policy), ("scripted", "scripted")):
        results[name] = run_set_pieces(pol, config, trials, kinds=kinds)
    if out_dir is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_table_csv(out / "comparison.csv", results)
        write_trials_csv(out / "comparison_trials.csv", results)
    return results


def on_par(a: float, b: float, tol: float = 0.15) -> bool:
    """Relative difference within ``tol`` of the larger magnitude."""
    scale = max(abs(a), abs(b))
    return scale == 0 or abs(a - b) <= tol * scale
