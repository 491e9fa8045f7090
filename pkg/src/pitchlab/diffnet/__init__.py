"""Minimal reverse-mode autodiff stack sized for the soccer agent."""

from .layers import conv, dense, init_conv, init_dense, init_lstm, init_residual_stage, lstm_step, residual_stage
from .networks import (
    CriticNetwork,
    PolicyNetwork,
    Torso,
    gaussian_kl,
    gaussian_log_prob,
    kl_cov_part,
    kl_mean_part,
    sample_gaussian,
)
from .optim import Adam, ScalarAdam, clip_by_global_norm, global_norm
from .params import ParameterSet, load_psnap, save_psnap
from .tensor import Tensor, as_tensor, concat, conv2d_3x3, max_pool_3x3_s2, no_grad, stack, where

__all__ = [
    "Adam",
    "CriticNetwork",
    "ParameterSet",
    "PolicyNetwork",
    "ScalarAdam",
    "Tensor",
    "Torso",
    "as_tensor",
    "clip_by_global_norm",
    "concat",
    "conv",
    "conv2d_3x3",
    "dense",
    "gaussian_kl",
    "gaussian_log_prob",
    "global_norm",
    "init_conv",
    "init_dense",
    "init_lstm",
    "init_residual_stage",
    "kl_cov_part",
    "kl_mean_part",
    "load_psnap",
    "lstm_step",
    "max_pool_3x3_s2",
    "no_grad",
    "residual_stage",
    "sample_gaussian",
    "save_psnap",
    "stack",
    "where",
]
