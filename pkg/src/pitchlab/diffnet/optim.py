"""Adam with bias correction and global-norm gradient clipping."""

from __future__ import annotations

import math

import numpy as np

from ..errors import OptimizerFault
from .params import ParameterSet


def global_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def clip_by_global_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    norm = global_norm(grads)
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


class Adam:
    """First/second-moment optimizer; beta defaults 0.9 / 0.999, eps 1e-8.

    ``update`` mutates the parameter arrays in place and bumps
    ``params.version``; ``step`` counts completed updates.
    """

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: dict = {}
        self.v: dict = {}

    def update(self, params: ParameterSet, grads: dict) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise OptimizerFault(name)
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.step
        c2 = 1.0 - b2**self.step
        for name, g in grads.items():
            p = params[name]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * np.square(g)
            if self.lr:
                p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)
        params.version += 1

    def state_dict(self) -> dict:
        return {"step": self.step, "m": {k: v.copy() for k, v in self.m.items()}, "v": {k: v.copy() for k, v in self.v.items()}}

    def load_state_dict(self, state: dict) -> None:
        self.step = int(state["step"])
        self.m = {k: np.array(v) for k, v in state["m"].items()}
        self.v = {k: np.array(v) for k, v in state["v"].items()}


class ScalarAdam:
    """Adam on a small vector of free scalars (temperature, multipliers)."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step = 0
        self.m = 0.0
        self.v = 0.0

    def delta(self, grad):
        """Parameter change (to be added) for a gradient of the loss being minimised."""
        grad = np.asarray(grad, dtype=float)
        if not np.all(np.isfinite(grad)):
            raise OptimizerFault("dual")
        self.step += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mh = self.m / (1 - self.beta1**self.step)
        vh = self.v / (1 - self.beta2**self.step)
        return -self.lr * mh / (np.sqrt(vh) + self.eps)

    def state_dict(self):
        return {"step": self.step, "m": np.asarray(self.m).tolist(), "v": np.asarray(self.v).tolist()}

    def load_state_dict(self, s):
        self.step, self.m, self.v = int(s["step"]), np.asarray(s["m"]), np.asarray(s["v"])
