"""MPO policy improvement with a categorical critic and teacher distillation."""

from .categorical import (
    CategoricalValueDistribution,
    categorical_cross_entropy,
    check_support,
    make_support,
    project_categorical,
)
from .core import MPOLearner, learner_step, n_step_targets, time_major
from .metrics import MetricsWriter, read_metrics
from .distill import Teacher, TeacherSet, adapt_coefficients, distill_regularizer, load_teacher, state_mask
from .mpo import (
    MpoDuals,
    entropy_of_weights,
    estep_weights,
    mstep_loss,
    solve_temperature,
    temperature_dual,
    temperature_dual_grad,
    weights_kl_to_uniform,
)

__all__ = [
    "CategoricalValueDistribution",
    "MPOLearner",
    "MetricsWriter",
    "MpoDuals",
    "Teacher",
    "TeacherSet",
    "adapt_coefficients",
    "categorical_cross_entropy",
    "check_support",
    "distill_regularizer",
    "entropy_of_weights",
    "estep_weights",
    "learner_step",
    "load_teacher",
    "make_support",
    "mstep_loss",
    "n_step_targets",
    "project_categorical",
    "read_metrics",
    "solve_temperature",
    "state_mask",
    "temperature_dual",
    "temperature_dual_grad",
    "time_major",
    "weights_kl_to_uniform",
]
