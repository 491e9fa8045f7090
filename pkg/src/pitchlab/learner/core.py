"""The MPO learner: one critic update, one E/M policy update and distillation per step."""

from __future__ import annotations

import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..config import LearnerConfig, NetworkConfig, make_rng
from ..diffnet import Adam, CriticNetwork, ParameterSet, PolicyNetwork, ScalarAdam, clip_by_global_norm, load_psnap, save_psnap
from ..diffnet.networks import sample_gaussian
from ..diffnet.tensor import no_grad
from ..errors import LearnerFault
from .categorical import categorical_cross_entropy, make_support, project_categorical
from .distill import TeacherSet, adapt_coefficients, distill_regularizer, state_mask
from .mpo import MpoDuals, entropy_of_weights, estep_weights, mstep_loss

OBS_KEYS = ("frame", "proprio", "privileged")


def time_major(batch: dict) -> dict:
    """(B, L, ...) step fields -> (L, B, ...); per-slice fields untouched."""
    out = {}
    for k, v in batch.items():
        out[k] = np.swapaxes(v, 0, 1) if k not in ("h0", "c0") else v
    return out


def n_step_targets(rewards, discounts, gamma: float, n: int):
    """n-step discounted reward sums and bootstrap factors.

    ``rewards``/``discounts`` are (T, B).  For t < T - n returns
    ``G_t = sum_k gamma^k prod_{i<k} d_{t+i} r_{t+k}`` and
    ``g_t = gamma^n prod_{i<n} d_{t+i}``, each (T - n, B).
    """
    T = rewards.shape[0]
    m = T - n
    if m <= 0:
        raise LearnerFault(f"trajectory length {T} too short for {n}-step returns", {"T": T, "n": n})
    G = np.zeros((m, *rewards.shape[1:]))
    live = np.ones((m, *rewards.shape[1:]))
    for k in range(n):
        G += (gamma**k) * live * rewards[k : k + m]
        live = live * discounts[k : k + m]
    return G, (gamma**n) * live


class MPOLearner:
    """Distributional MPO with a privileged critic.

    Estimator-style: construct with configs, call ``partial_fit(batch)`` once
    per learner step; the latest diagnostics are in ``metrics_``.
    """

    def __init__(
        self,
        learner_config: LearnerConfig | None = None,
        network_config: NetworkConfig | None = None,
        seed: int = 0,
        teachers: TeacherSet | None = None,
        critic_observation: str | None = None,
        tilt_threshold: float = 0.8,
        policy_params: ParameterSet | None = None,
        critic_params: ParameterSet | None = None,
    ):
        self.config = learner_config or LearnerConfig()
        self.network_config = network_config or NetworkConfig()
        cfg = self.config
        if not 0.0 < cfg.discount < 1.0:
            from ..errors import LearnerConfigError

            raise LearnerConfigError(f"discount must lie in (0, 1), got {cfg.discount}")
        self.seed = seed
        self.policy_net = PolicyNetwork(self.network_config)
        self.critic_net = CriticNetwork(self.network_config, critic_observation or self.network_config.critic_observation or self.network_config.observation)
        init_rng = make_rng(seed, "learner.init")
        self.policy_params = policy_params.copy() if policy_params is not None else self.policy_net.init(init_rng)
        self.critic_params = critic_params.copy() if critic_params is not None else self.critic_net.init(init_rng)
        self.target_policy = self.policy_params.copy()
        self.target_critic = self.critic_params.copy()
        b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        self.policy_opt = Adam(cfg.actor_lr, b1, b2, eps)
        self.critic_opt = Adam(cfg.critic_lr, b1, b2, eps)
        self.temperature_opt = ScalarAdam(cfg.temperature_lr, b1, b2, eps)
        self.alpha_opt = ScalarAdam(cfg.tradeoff_lr, b1, b2, eps)
        self.duals = MpoDuals(cfg.init_temperature, cfg.init_alpha_mean, cfg.init_alpha_cov)
        self.teachers = teachers or TeacherSet()
        self.tilt_threshold = tilt_threshold
        self.support = make_support(self.network_config.v_min, self.network_config.v_max, self.network_config.num_atoms)
        self.steps = 0
        self.running_return: float | None = None
        self.rng = make_rng(seed, "learner.sample")
        self.metrics_: dict = {}

    # -- estimator surface -------------------------------------------------------

    def partial_fit(self, batch: dict, running_return: float | None = None) -> "MPOLearner":
        if running_return is not None:
            self.running_return = running_return
        self.metrics_ = self.learner_step(batch)
        return self

    def get_params(self, deep=False) -> dict:
        return {"learner_config": self.config, "network_config": self.network_config, "seed": self.seed}

    # -- one learner step ----------------------------------------------------------

    def learner_step(self, batch: dict) -> dict:
        cfg = self.config
        b = time_major(batch)
        T, B = b["reward"].shape
        self._check_batch(b)
        n, K = cfg.n_step, cfg.action_samples
        obs = {k: b[k] for k in OBS_KEYS}
        starts = b["start"]
        state0 = (b["h0"].astype(np.float32), b["c0"].astype(np.float32))
        z = self.support

        with no_grad():
            Pt = self.target_policy.tensors(False)
            mean_old, std_old, _, _ = self.policy_net.sequence(Pt, obs, state0, starts)
            mean_old, std_old = mean_old.data, std_old.data
            samples = sample_gaussian(self.rng, mean_old, std_old, K).astype(np.float32)  # (T, B, K, D)
            Ct = self.target_critic.tensors(False)
            core_t = self.critic_net.core(Ct, obs, starts=starts)
            logits_t = self.critic_net.logits(Ct, core_t, b["privileged"], np.clip(samples, -1, 1))
            probs_t = logits_t.softmax(-1).data.astype(float)  # (T, B, K, A)
        q = probs_t @ z  # (T, B, K)

        # critic
        G, g_eff = n_step_targets(b["reward"].astype(float), b["discount"].astype(float), cfg.discount, n)
        boot = probs_t[n:].mean(axis=2)  # mixture over the sampled next actions
        target = project_categorical(G.ravel(), boot.reshape(-1, z.size), g_eff.ravel(), z).reshape(T - n, B, z.size)
        Pc = self.critic_params.tensors()
        core = self.critic_net.core(Pc, obs, starts=starts)
        act = np.clip(b["action"][: T - n], -1, 1)[:, :, None, :]
        logits = self.critic_net.logits(Pc, core[: T - n], b["privileged"][: T - n], act)
        logp = logits.log_softmax(-1)
        critic_loss = categorical_cross_entropy(target.astype(logp.dtype)[:, :, None, :], logp)
        self._check("critic_loss", critic_loss, b)
        critic_loss.backward()
        cgrads, cnorm = clip_by_global_norm({k: Pc[k].grad for k in Pc if Pc[k].grad is not None}, cfg.grad_clip_norm)
        self.critic_opt.update(self.critic_params, cgrads)

        # E-step
        q_flat = q.reshape(T * B, K)
        weights, self.duals = estep_weights(q_flat, self.duals, cfg.eps_estep, optimizer=self.temperature_opt)

        # M-step (+ distillation)
        Pp = self.policy_params.tensors()
        mean, std, _, _ = self.policy_net.sequence(Pp, obs, state0, starts)
        D = mean.shape[-1]
        ms = mstep_loss(
            weights, samples.reshape(T * B, K, D), mean.reshape(T * B, D), std.reshape(T * B, D),
            mean_old.reshape(T * B, D), std_old.reshape(T * B, D), self.duals,
            cfg.eps_kl_mean, cfg.eps_kl_cov, optimizer=self.alpha_opt,
        )
        policy_loss = ms.loss
        distill_kls = []
        if len(self.teachers):
            outs, masks = [], []
            for t in self.teachers:
                outs.append(t.outputs(obs, starts))
                masks.append(state_mask(b["proprio"], t.states, self.tilt_threshold))
            penalty, distill_kls = distill_regularizer(mean, std, outs, self.teachers, masks)
            policy_loss = policy_loss + penalty
        self._check("policy_loss", policy_loss, b)
        policy_loss.backward()
        pgrads, pnorm = clip_by_global_norm({k: Pp[k].grad for k in Pp if Pp[k].grad is not None}, cfg.grad_clip_norm)
        self.policy_opt.update(self.policy_params, pgrads)
        self.duals = ms.duals

        self.steps += 1
        if self.steps % cfg.target_update_period == 0:
            self.target_policy = self.policy_params.copy()
            self.target_critic = self.critic_params.copy()
        if len(self.teachers):
            self.teachers = adapt_coefficients(self.teachers, self.running_return, cfg.distill_decay)

        metrics = {
            "step": self.steps,
            "critic_loss": float(critic_loss.data),
            "policy_nll": float(ms.policy_loss.data),
            "kl_mean": ms.kl_mean,
            "kl_cov": ms.kl_cov,
            "temperature": self.duals.temperature,
            "alpha_mean": self.duals.alpha_mean,
            "alpha_cov": self.duals.alpha_cov,
            "weight_entropy": entropy_of_weights(weights),
            "q_mean": float(q.mean()),
            "reward_mean": float(b["reward"].mean()),
            "critic_grad_norm": cnorm,
            "policy_grad_norm": pnorm,
            "policy_std": float(std.data.mean()),
        }
        for j, t in enumerate(self.teachers):
            metrics[f"lambda_{t.name}"] = t.coef
            metrics[f"distill_kl_{t.name}"] = distill_kls[j] if distill_kls else 0.0
        for k, v in metrics.items():
            if isinstance(v, float) and not math.isfinite(v):
                raise LearnerFault(f"non-finite metric {k}", metrics)
        return metrics

    def _check_batch(self, b):
        bad = {}
        for k in ("proprio", "privileged", "action", "reward", "discount"):
            n = int(np.size(b[k]) - np.count_nonzero(np.isfinite(b[k])))
            if n:
                bad[f"nonfinite_{k}"] = n
        if bad:
            raise LearnerFault("non-finite values in batch", {**bad, "step": self.steps})

    def _check(self, name, loss, b):
        v = float(loss.data)
        if not math.isfinite(v):
            diag = {
                "reward_min": float(np.min(b["reward"])), "reward_max": float(np.max(b["reward"])),
                "action_absmax": float(np.max(np.abs(b["action"]))),
                "temperature": self.duals.temperature, "step": self.steps,
            }
            raise LearnerFault(f"non-finite {name}", diag)

    # -- persistence -----------------------------------------------------------------

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name, p in (("policy", self.policy_params), ("critic", self.critic_params),
                        ("target_policy", self.target_policy), ("target_critic", self.target_critic)):
            save_psnap(d / f"{name}.psnap", p, {"version": p.version})
        opt = {}
        for name, o in (("policy_opt", self.policy_opt), ("critic_opt", self.critic_opt)):
            opt[f"{name}.step"] = np.array(o.step)
            for k, v in o.m.items():
                opt[f"{name}.m.{k}"] = v
                opt[f"{name}.v.{k}"] = o.v[k]
        np.savez(d / "optim.npz", **opt)
        state = {
            "steps": self.steps,
            "duals": self.duals.as_dict(),
            "temperature_opt": self.temperature_opt.state_dict(),
            "alpha_opt": self.alpha_opt.state_dict(),
            "teacher_coefs": [t.coef for t in self.teachers],
            "running_return": self.running_return,
            "rng": self.rng.bit_generator.state,
        }
        (d / "learner.json").write_text(json.dumps(state, sort_keys=True))
        return d

    def restore(self, directory) -> "MPOLearner":
        d = Path(directory)
        self.policy_params, _ = load_psnap(d / "policy.psnap")
        self.critic_params, _ = load_psnap(d / "critic.psnap")
        self.target_policy, _ = load_psnap(d / "target_policy.psnap")
        self.target_critic, _ = load_psnap(d / "target_critic.psnap")
        with np.load(d / "optim.npz") as z:
            for name, o in (("policy_opt", self.policy_opt), ("critic_opt", self.critic_opt)):
                o.step = int(z[f"{name}.step"])
                o.m = {k[len(name) + 3 :]: z[k].copy() for k in z.files if k.startswith(f"{name}.m.")}
                o.v = {k[len(name) + 3 :]: z[k].copy() for k in z.files if k.startswith(f"{name}.v.")}
        state = json.loads((d / "learner.json").read_text())
        self.steps = state["steps"]
        self.duals = MpoDuals(**state["duals"])
        self.temperature_opt.load_state_dict(state["temperature_opt"])
        self.alpha_opt.load_state_dict(state["alpha_opt"])
        coefs = state["teacher_coefs"]
        if len(coefs) == len(self.teachers):
            self.teachers = TeacherSet([replace(t, coef=c) for t, c in zip(self.teachers, coefs)])
        self.running_return = state["running_return"]
        self.rng.bit_generator.state = state["rng"]
        return self


def learner_step(batch, learner: MPOLearner, running_return=None) -> dict:
    """Functional form: advance ``learner`` by one step on ``batch``, return metrics."""
    learner.partial_fit(batch, running_return)
    return learner.metrics_
