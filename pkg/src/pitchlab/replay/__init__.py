"""Trajectory replay, RAED dataset reuse, online/offline mixing and the ratio gate."""

from .buffer import ReplayBuffer
from .dataset import DatasetFile, DatasetWriter, export_dataset, import_dataset
from .sampling import (
    RatioGate,
    batch_split,
    ratio_gate,
    resolve_mix_ratio,
    sample_batch,
    sample_offline_indices,
    sample_slices,
)
from .slices import (
    FRAME_SHAPE,
    REWARD_DIM,
    STEP_FIELDS,
    TRUTH_DIM,
    TrajectorySlice,
    empty_slice,
    random_slice,
    schema_hash,
    slice_fields,
    stack_slices,
)

__all__ = [
    "DatasetFile",
    "DatasetWriter",
    "FRAME_SHAPE",
    "REWARD_DIM",
    "RatioGate",
    "ReplayBuffer",
    "STEP_FIELDS",
    "TRUTH_DIM",
    "TrajectorySlice",
    "batch_split",
    "empty_slice",
    "export_dataset",
    "import_dataset",
    "random_slice",
    "ratio_gate",
    "resolve_mix_ratio",
    "sample_batch",
    "sample_offline_indices",
    "sample_slices",
    "schema_hash",
    "slice_fields",
    "stack_slices",
]
