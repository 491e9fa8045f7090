"""Parameter initialisers and the layer functions built on :mod:`tensor`.

Layers are plain functions of a parameter mapping ``P`` (name -> Tensor)
so one network definition serves float32 training, float64 gradient checks
and frozen-feature probing alike.  Initialisation is fan-in scaled uniform.
"""

from __future__ import annotations

import math

import numpy as np

from .params import ParameterSet
from .tensor import Tensor, concat, conv2d_3x3, max_pool_3x3_s2


def _uniform(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def init_dense(params: ParameterSet, name: str, n_in: int, n_out: int, rng, bias=0.0, scale=1.0) -> None:
    params.add(f"{name}.w", scale * _uniform(rng, n_in, (n_in, n_out)))
    params.add(f"{name}.b", np.broadcast_to(np.asarray(bias, dtype=float), (n_out,)))


def dense(P, name: str, x: Tensor) -> Tensor:
    return x @ P[f"{name}.w"] + P[f"{name}.b"]


def init_conv(params: ParameterSet, name: str, c_in: int, c_out: int, rng) -> None:
    params.add(f"{name}.w", _uniform(rng, 9 * c_in, (3, 3, c_in, c_out)))
    params.add(f"{name}.b", np.zeros(c_out))


def conv(P, name: str, x: Tensor) -> Tensor:
    return conv2d_3x3(x, P[f"{name}.w"], P[f"{name}.b"])


def init_residual_stage(params: ParameterSet, name: str, c_in: int, c_out: int, rng) -> None:
    init_conv(params, f"{name}.in", c_in, c_out, rng)
    init_conv(params, f"{name}.res0", c_out, c_out, rng)
    init_conv(params, f"{name}.res1", c_out, c_out, rng)


def residual_stage(P, name: str, x: Tensor) -> Tensor:
    """conv -> 3x3/2 max pool -> one pre-activation residual unit."""
    x = max_pool_3x3_s2(conv(P, f"{name}.in", x))
    y = conv(P, f"{name}.res0", x.relu())
    y = conv(P, f"{name}.res1", y.relu())
    return x + y


def init_lstm(params: ParameterSet, name: str, n_in: int, width: int, rng, forget_bias=1.0) -> None:
    params.add(f"{name}.wx", _uniform(rng, n_in, (n_in, 4 * width)))
    params.add(f"{name}.wh", _uniform(rng, width, (width, 4 * width)))
    b = np.zeros(4 * width)
    b[width : 2 * width] = forget_bias
    params.add(f"{name}.b", b)


def lstm_step(P, name: str, x: Tensor, h: Tensor, c: Tensor, xw: Tensor | None = None):
    """One LSTM update; gate order (input, forget, cell, output).

    ``xw`` may carry a precomputed ``x @ wx`` (hoisted out of an unroll).
    """
    width = P[f"{name}.wh"].shape[0]
    if xw is None:
        xw = x @ P[f"{name}.wx"]
    z = xw + h @ P[f"{name}.wh"] + P[f"{name}.b"]
    i = z[..., :width].sigmoid()
    f = z[..., width : 2 * width].sigmoid()
    g = z[..., 2 * width : 3 * width].tanh()
    o = z[..., 3 * width :].sigmoid()
    c2 = f * c + i * g
    h2 = o * c2.tanh()
    return h2, c2


def mlp(P, name: str, x: Tensor, n_layers: int) -> Tensor:
    for k in range(n_layers - 1):
        x = dense(P, f"{name}.{k}", x).relu()
    return dense(P, f"{name}.{n_layers - 1}", x)


def cat(xs, axis=-1) -> Tensor:
    return concat(xs, axis)
