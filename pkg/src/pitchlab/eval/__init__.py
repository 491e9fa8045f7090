"""Set pieces, the gaze study, the state-vs-vision comparison and report files."""

from .compare import compare_state_vs_vision, on_par
from .gaze import GazeStudyResult, gaze_rollout, run_gaze_study, trace_row
from .report import emit_report, svg_histogram, svg_line_chart, svg_traces, table_rows, write_gaze_csv, write_table_csv
from .setpieces import (
    SET_PIECES,
    UNITS,
    SetPieceResult,
    SetPieceTrial,
    eval_env,
    make_agent,
    parse_kind,
    read_trials_csv,
    run_set_piece,
    run_set_pieces,
    write_trials_csv,
)

__all__ = [
    "compare_state_vs_vision", "on_par", "GazeStudyResult", "gaze_rollout", "run_gaze_study", "trace_row",
    "emit_report", "svg_histogram", "svg_line_chart", "svg_traces", "table_rows", "write_gaze_csv",
    "write_table_csv", "SET_PIECES", "UNITS", "SetPieceResult", "SetPieceTrial", "eval_env", "make_agent",
    "parse_kind", "read_trials_csv", "run_set_piece", "run_set_pieces", "write_trials_csv",
]
