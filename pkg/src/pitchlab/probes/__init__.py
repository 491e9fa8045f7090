"""Decoding probes: what the frozen recurrent state knows about the positions of things."""

from .mixture import (
    TARGETS,
    Heatmap,
    MixtureDensity,
    ProbeHead,
    argmax_positions,
    grid_axes,
    heatmap,
    init_probe,
    mixture_nll,
    predict,
    probe_nll,
    read_pgm,
    train_head,
    write_pgm,
)
from .study import (
    MIN_TRAJECTORIES,
    ProbeTrajectory,
    collect_trajectories,
    encode_features,
    eval_probe,
    fit_probe,
    kick_tracking,
    run_probe_study,
    targets_for,
    write_metrics_csv,
    write_trace_csv,
)

__all__ = [
    "TARGETS", "Heatmap", "MixtureDensity", "ProbeHead", "argmax_positions", "grid_axes", "heatmap",
    "init_probe", "mixture_nll", "predict", "probe_nll", "read_pgm", "train_head", "write_pgm",
    "MIN_TRAJECTORIES", "ProbeTrajectory", "collect_trajectories", "encode_features", "eval_probe",
    "fit_probe", "kick_tracking", "run_probe_study", "targets_for", "write_metrics_csv", "write_trace_csv",
]
