"""MPO policy improvement: temperature dual, E-step weights and decoupled M-step."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..diffnet import ScalarAdam, gaussian_log_prob, kl_cov_part, kl_mean_part
from ..diffnet.tensor import Tensor, as_tensor
from ..errors import LearnerFault

TEMPERATURE_FLOOR = 1e-6


@dataclass
class MpoDuals:
    temperature: float = 1.0
    alpha_mean: float = 1.0
    alpha_cov: float = 1.0

    def __post_init__(self):
        self.temperature = max(float(self.temperature), TEMPERATURE_FLOOR)
        self.alpha_mean = max(float(self.alpha_mean), 0.0)
        self.alpha_cov = max(float(self.alpha_cov), 0.0)

    def as_dict(self) -> dict:
        return {"temperature": self.temperature, "alpha_mean": self.alpha_mean, "alpha_cov": self.alpha_cov}


def _logmeanexp(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.mean(np.exp(x - m), axis=axis))


def temperature_dual(eta: float, q, eps: float) -> float:
    """g(eta) = eta*eps + eta * mean_s log mean_k exp(q_sk / eta)."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    return float(eta * eps + eta * np.mean(_logmeanexp(q / eta)))


def temperature_dual_grad(eta: float, q, eps: float) -> float:
    q = np.atleast_2d(np.asarray(q, dtype=float))
    z = q / eta
    w = _softmax(z)
    return float(eps + np.mean(_logmeanexp(z)) - np.mean(np.sum(w * z, axis=-1)))


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def estep_weights(q_values, duals: MpoDuals, eps_kl: float, lr: float = 1e-2, optimizer: ScalarAdam | None = None):
    """Normalised weights ``softmax(q / eta)`` per state and one dual step on ``eta``.

    ``q_values`` is (K,) or (S, K).  Returns (weights, new duals).  The update
    is one Adam step (or plain gradient step without an optimizer) with the
    temperature floored at 1e-6.
    """
    q = np.asarray(q_values, dtype=float)
    squeeze = q.ndim == 1
    q2 = np.atleast_2d(q)
    finite = np.isfinite(q2)
    if not finite.any():
        raise LearnerFault("all q-values are non-finite", {"shape": q2.shape})
    if not finite.all():
        q2 = np.where(finite, q2, np.nanmin(np.where(finite, q2, np.nan)))
    eta = duals.temperature
    weights = _softmax(q2 / eta)
    grad = temperature_dual_grad(eta, q2, eps_kl)
    step = optimizer.delta(grad) if optimizer is not None else -lr * grad
    new = MpoDuals(max(eta + float(step), TEMPERATURE_FLOOR), duals.alpha_mean, duals.alpha_cov)
    return (weights[0] if squeeze else weights), new


def solve_temperature(q, eps: float, eta0: float = 1.0, lr: float = 1e-2, steps: int = 5000, tol: float = 1e-10) -> float:
    """Minimise the temperature dual by Adam-preconditioned gradient descent."""
    opt = ScalarAdam(lr)
    eta = eta0
    for _ in range(steps):
        g = temperature_dual_grad(eta, q, eps)
        d = float(opt.delta(g))
        eta = max(eta + d, TEMPERATURE_FLOOR)
        if abs(d) < tol * max(1.0, eta):
            break
    return eta


def weights_kl_to_uniform(weights) -> float:
    """Mean over states of KL(w || uniform)."""
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    k = w.shape[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0, w * np.log(w * k), 0.0)
    return float(np.mean(terms.sum(axis=-1)))


@dataclass
class MStepOutput:
    loss: Tensor
    policy_loss: Tensor
    kl_mean: float
    kl_cov: float
    duals: MpoDuals


def mstep_loss(weights, actions, mean_new, std_new, mean_old, std_old, duals: MpoDuals, eps_mean, eps_cov,
               alpha_lr: float = 1e-4, optimizer: ScalarAdam | None = None) -> MStepOutput:
    """Decoupled M-step.

    ``weights`` (S, K), ``actions`` (S, K, D) sampled from the old policy,
    ``mean_new``/``std_new`` (S, D) tensors of the policy being trained and
    ``mean_old``/``std_old`` (S, D) arrays.  The mean is fitted with the old
    covariance and the covariance with the old mean; each half carries its
    own KL constraint.  ``loss`` is

        -sum_k w_k log pi(a_k) + a_mu (KL_mu - eps_mu) + a_S (KL_S - eps_S)

    with the multipliers held constant.  The multipliers then take one ascent
    step on ``a (KL - eps)`` with the KLs held constant, projected to >= 0.
    """
    mean_new, std_new = as_tensor(mean_new), as_tensor(std_new)
    dt = mean_new.dtype
    mean_old = np.asarray(mean_old, dtype=dt)
    std_old = np.asarray(std_old, dtype=dt)
    a = np.asarray(actions, dtype=dt)
    w = np.asarray(weights, dtype=dt)
    m_new = mean_new.reshape(*mean_new.shape[:-1], 1, mean_new.shape[-1])
    s_new = std_new.reshape(*std_new.shape[:-1], 1, std_new.shape[-1])
    lp_mean = gaussian_log_prob(m_new, std_old[..., None, :], a)
    lp_cov = gaussian_log_prob(mean_old[..., None, :], s_new, a)
    nll = -((lp_mean + lp_cov) * w).sum(axis=-1).mean()
    kl_mu = kl_mean_part(mean_old, std_old, mean_new).mean()
    kl_sigma = kl_cov_part(mean_old, std_old, std_new).mean()
    loss = nll + duals.alpha_mean * (kl_mu - eps_mean) + duals.alpha_cov * (kl_sigma - eps_cov)

    km, kc = float(kl_mu.data), float(kl_sigma.data)
    # ascent on alpha * (KL - eps)  ==  descent on alpha * (eps - KL)
    grad = np.array([eps_mean - km, eps_cov - kc])
    step = optimizer.delta(grad) if optimizer is not None else -alpha_lr * grad
    new = MpoDuals(duals.temperature, max(duals.alpha_mean + float(step[0]), 0.0), max(duals.alpha_cov + float(step[1]), 0.0))
    return MStepOutput(loss, nll, km, kc, new)


def entropy_of_weights(weights) -> float:
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.mean(-np.sum(np.where(w > 0, w * np.log(w), 0.0), axis=-1)))


def gamma_power(gamma: float, n: int) -> float:
    return math.pow(gamma, n)
