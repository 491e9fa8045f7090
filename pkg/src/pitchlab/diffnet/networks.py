"""Policy and critic networks.

Both networks share the same torso layout: an observation encoder followed by
an LSTM.  With ``observation = "vision"`` the encoder is three residual conv
stages over the 40x30 frame, flattened and concatenated with proprioception
before a dense feature layer; with ``"state"`` the frame is ignored and the
privileged state vector takes its place (the state-based baseline agent).

The policy head emits a diagonal Gaussian in normalised action units; the
critic head scores (state, action) pairs with a categorical distribution over
a fixed support, seeing the privileged state next to its own LSTM output.
"""

from __future__ import annotations

import math

import numpy as np

from ..config import NetworkConfig
from ..errors import NetworkConfigError
from ..sim import ACTION_DIM, PRIVILEGED_DIM, PROPRIO_DIM
from .layers import cat, dense, init_dense, init_lstm, init_residual_stage, lstm_step, mlp, residual_stage
from .params import ParameterSet
from .tensor import Tensor, as_tensor, no_grad, stack

FRAME_HW = (30, 40)
LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def _pooled(n):
    return (n - 1) // 2 + 1


def _check_obs(obs: dict, vision: bool):
    if vision:
        f = obs.get("frame")
        if f is None or f.shape[-3:] != (*FRAME_HW, 3):
            raise NetworkConfigError(f"frame must be (..., 30, 40, 3), got {None if f is None else f.shape}")
    p = obs.get("proprio")
    if p is None or p.shape[-1] != PROPRIO_DIM:
        raise NetworkConfigError(f"proprio must have {PROPRIO_DIM} features")
    q = obs.get("privileged")
    if not vision and (q is None or q.shape[-1] != PRIVILEGED_DIM):
        raise NetworkConfigError(f"privileged must have {PRIVILEGED_DIM} features")


class Torso:
    """Encoder + LSTM with parameters under ``prefix``."""

    def __init__(self, prefix: str, config: NetworkConfig, vision: bool):
        self.prefix = prefix
        self.config = config
        self.vision = vision
        self.width = config.lstm_width

    def init(self, params: ParameterSet, rng) -> None:
        cfg, p = self.config, self.prefix
        if self.vision:
            c_in, h, w = 3, *FRAME_HW
            for k, c in enumerate(cfg.encoder_channels):
                init_residual_stage(params, f"{p}.enc{k}", c_in, c, rng)
                c_in, h, w = c, _pooled(h), _pooled(w)
            n_in = c_in * h * w + PROPRIO_DIM
        else:
            n_in = PRIVILEGED_DIM + PROPRIO_DIM
        init_dense(params, f"{p}.feat", n_in, cfg.feature_width, rng)
        init_lstm(params, f"{p}.lstm", cfg.feature_width, self.width, rng)

    def features(self, P, obs: dict) -> Tensor:
        """Flat batch of observations (N, ...) -> (N, feature_width)."""
        _check_obs(obs, self.vision)
        dt = P[f"{self.prefix}.feat.w"].dtype
        proprio = as_tensor(np.asarray(obs["proprio"], dtype=dt))
        if self.vision:
            x = as_tensor(np.asarray(obs["frame"], dtype=dt) * dt.type(1 / 255))
            for k in range(len(self.config.encoder_channels)):
                x = residual_stage(P, f"{self.prefix}.enc{k}", x)
            x = x.relu().reshape(x.shape[0], -1)
            x = cat([x, proprio])
        else:
            x = cat([as_tensor(np.asarray(obs["privileged"], dtype=dt)), proprio])
        return dense(P, f"{self.prefix}.feat", x).relu()

    def unroll(self, P, feats: Tensor, state, starts=None):
        """feats (T, B, F); ``starts`` (T, B) zeroes the state before step t.

        Returns (outputs (T, B, width), final state).
        """
        T = feats.shape[0]
        h, c = (as_tensor(s) for s in state)
        xw = feats @ P[f"{self.prefix}.lstm.wx"]
        outs = []
        for t in range(T):
            if starts is not None and np.any(starts[t]):
                keep = (~np.asarray(starts[t], dtype=bool))[:, None].astype(feats.dtype)
                h, c = h * keep, c * keep
            h, c = lstm_step(P, f"{self.prefix}.lstm", None, h, c, xw=xw[t])
            outs.append(h)
        return stack(outs, 0), (h, c)

    def zero_state(self, batch: int, dtype=np.float32):
        z = np.zeros((batch, self.width), dtype=dtype)
        return z, z.copy()


def _flatten_seq(obs: dict):
    """(T, B, ...) arrays -> (T*B, ...) plus the (T, B) leading shape."""
    lead = next(iter(v for v in obs.values() if v is not None)).shape[:2]
    flat = {k: (None if v is None else v.reshape(-1, *v.shape[2:])) for k, v in obs.items()}
    return flat, lead


class PolicyNetwork:
    """Recurrent diagonal-Gaussian policy over normalised actions in [-1, 1]^6."""

    prefix = "policy"

    def __init__(self, config: NetworkConfig | None = None, observation: str | None = None):
        self.config = config or NetworkConfig()
        self.observation = observation or self.config.observation
        if self.observation not in ("vision", "state"):
            raise NetworkConfigError(f"unknown observation kind: {self.observation}")
        self.torso = Torso(f"{self.prefix}.torso", self.config, self.observation == "vision")

    def init(self, rng, zero=False) -> ParameterSet:
        params = ParameterSet()
        self.torso.init(params, rng)
        cfg = self.config
        pre_std = math.log(math.expm1(max(cfg.init_std - cfg.std_floor, 1e-6)))
        bias = np.concatenate([np.zeros(ACTION_DIM), np.full(ACTION_DIM, pre_std)])
        init_dense(params, f"{self.prefix}.head", cfg.lstm_width, 2 * ACTION_DIM, rng, bias=bias, scale=0.1)
        if zero:
            for k in params:
                params[k] = np.zeros_like(params[k])
        return params

    def zero_state(self, batch=1, dtype=np.float32):
        return self.torso.zero_state(batch, dtype)

    def head(self, P, core: Tensor):
        out = dense(P, f"{self.prefix}.head", core)
        mean = out[..., :ACTION_DIM]
        std = out[..., ACTION_DIM:].softplus() + self.config.std_floor
        return mean, std

    def sequence(self, P, obs: dict, state, starts=None):
        """Unroll over (T, B) observations: returns (mean, std, core, final state)."""
        flat, (T, B) = _flatten_seq(obs)
        feats = self.torso.features(P, flat)
        core, final = self.torso.unroll(P, feats.reshape(T, B, -1), state, starts)
        mean, std = self.head(P, core)
        return mean, std, core, final

    def step(self, params: ParameterSet, obs: dict, state):
        """Single-timestep inference for a batch of B observations (no graph).

        Returns numpy (mean, std, core, state').
        """
        with no_grad():
            P = params.tensors(requires_grad=False)
            seq = {k: (None if v is None else np.asarray(v)[None]) for k, v in obs.items()}
            mean, std, core, (h, c) = self.sequence(P, seq, state)
        return mean.data[0], std.data[0], core.data[0], (h.data, c.data)


class CriticNetwork:
    """Distributional Q(s, a): torso output, privileged state and action -> atom logits."""

    prefix = "critic"

    def __init__(self, config: NetworkConfig | None = None, observation: str | None = None):
        self.config = config or NetworkConfig()
        self.observation = observation or self.config.observation
        self.torso = Torso(f"{self.prefix}.torso", self.config, self.observation == "vision")
        self.support = np.linspace(self.config.v_min, self.config.v_max, self.config.num_atoms)

    def init(self, rng, zero=False) -> ParameterSet:
        params = ParameterSet()
        self.torso.init(params, rng)
        cfg = self.config
        init_dense(params, f"{self.prefix}.head.0", cfg.lstm_width + PRIVILEGED_DIM + ACTION_DIM, cfg.critic_hidden, rng)
        init_dense(params, f"{self.prefix}.head.1", cfg.critic_hidden, cfg.num_atoms, rng, scale=0.1)
        if zero:
            for k in params:
                params[k] = np.zeros_like(params[k])
        return params

    def core(self, P, obs: dict, state=None, starts=None):
        flat, (T, B) = _flatten_seq(obs)
        dt = P[f"{self.torso.prefix}.feat.w"].dtype
        state = state if state is not None else self.torso.zero_state(B, dt)
        feats = self.torso.features(P, flat)
        core, _ = self.torso.unroll(P, feats.reshape(T, B, -1), state, starts)
        return core

    def logits(self, P, core: Tensor, privileged, actions) -> Tensor:
        """core (..., W), privileged (..., 12), actions (..., K, 6) -> logits (..., K, atoms)."""
        dt = core.dtype
        actions = as_tensor(actions if isinstance(actions, Tensor) else np.asarray(actions, dtype=dt))
        K = actions.shape[-2]
        priv = as_tensor(np.asarray(privileged, dtype=dt))
        ctx = cat([core, priv])
        ctx = ctx.reshape(*ctx.shape[:-1], 1, ctx.shape[-1])
        ones = np.ones((*ctx.shape[:-2], K, 1), dtype=dt)
        x = cat([ctx * ones, actions])
        return mlp(P, f"{self.prefix}.head", x, 2)

    def expected(self, logits: Tensor) -> np.ndarray:
        return logits.softmax(-1).data @ self.support.astype(logits.dtype)


# -- Gaussian helpers ------------------------------------------------------------


def gaussian_log_prob(mean, std, action) -> Tensor:
    """Diagonal Gaussian log density summed over the last axis (tensor-valued)."""
    mean, std, action = as_tensor(mean), as_tensor(std), as_tensor(action)
    z = (action - mean) / std
    return (-0.5 * z.square() - std.log() - LOG_SQRT_2PI).sum(axis=-1)


def gaussian_kl(mean_p, std_p, mean_q, std_q) -> Tensor:
    """KL(p || q) for diagonal Gaussians, summed over the last axis."""
    mean_p, std_p, mean_q, std_q = (as_tensor(x) for x in (mean_p, std_p, mean_q, std_q))
    var_ratio = (std_p / std_q).square()
    diff = ((mean_p - mean_q) / std_q).square()
    return (0.5 * (var_ratio + diff - 1.0) - (std_p / std_q).log()).sum(axis=-1)


def kl_mean_part(mean_old, std_old, mean_new) -> Tensor:
    """KL(N(mu_old, s_old) || N(mu_new, s_old)): the mean-only term."""
    return gaussian_kl(mean_old, std_old, mean_new, std_old)


def kl_cov_part(mean_old, std_old, std_new) -> Tensor:
    """KL(N(mu_old, s_old) || N(mu_old, s_new)): the covariance-only term."""
    return gaussian_kl(mean_old, std_old, mean_old, std_new)


def sample_gaussian(rng, mean, std, k=None) -> np.ndarray:
    mean, std = np.asarray(mean), np.asarray(std)
    shape = mean.shape if k is None else (*mean.shape[:-1], k, mean.shape[-1])
    eps = rng.standard_normal(shape).astype(mean.dtype)
    if k is None:
        return mean + std * eps
    return mean[..., None, :] + std[..., None, :] * eps
