import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import worst_over_draws
from pitchlab.config import LearnerConfig, NetworkConfig
from pitchlab.diffnet import (
    Adam,
    CriticNetwork,
    ParameterSet,
    PolicyNetwork,
    clip_by_global_norm,
    gaussian_kl,
    gaussian_log_prob,
    kl_cov_part,
    kl_mean_part,
    load_psnap,
    save_psnap,
)
from pitchlab.diffnet.layers import init_lstm, init_residual_stage, lstm_step, residual_stage
from pitchlab.diffnet.tensor import Tensor, conv2d_3x3, max_pool_3x3_s2, no_grad
from pitchlab.errors import NetworkConfigError, OptimizerFault, SnapshotLoadError
from pitchlab.sim import ACTION_DIM, PRIVILEGED_DIM, PROPRIO_DIM

DRAWS = 20
TOL = 1e-3


def _obs(rng, T, B, frames=True):
    return {
        "frame": rng.integers(0, 256, size=(T, B, 30, 40, 3)).astype(np.uint8) if frames else None,
        "proprio": rng.uniform(-1, 1, size=(T, B, PROPRIO_DIM)),
        "privileged": rng.uniform(-1, 1, size=(T, B, PRIVILEGED_DIM)),
    }


# -- reference implementations --------------------------------------------------


def _conv_reference(x, w, b):
    n, h, wd, _ = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.zeros((n, h, wd, w.shape[-1])) + b
    for dy in range(3):
        for dx in range(3):
            out += np.einsum("nhwc,cd->nhwd", xp[:, dy : dy + h, dx : dx + wd], w[dy, dx])
    return out


def _pool_reference(x):
    n, h, w, c = x.shape
    ho, wo = (h - 1) // 2 + 1, (w - 1) // 2 + 1
    out = np.empty((n, ho, wo, c))
    for i in range(ho):
        for j in range(wo):
            r0, c0 = max(2 * i - 1, 0), max(2 * j - 1, 0)
            out[:, i, j] = x[:, r0 : 2 * i + 2, c0 : 2 * j + 2].max(axis=(1, 2))
    return out


def test_conv_matches_loop_reference(rng):
    x = rng.normal(size=(3, 7, 9, 4))
    w = rng.normal(size=(3, 3, 4, 5))
    b = rng.normal(size=5)
    got = conv2d_3x3(Tensor(x), Tensor(w), Tensor(b)).data
    np.testing.assert_allclose(got, _conv_reference(x, w, b), atol=1e-12)


def test_maxpool_matches_window_reference(rng):
    x = rng.normal(size=(2, 30, 40, 3))
    np.testing.assert_array_equal(max_pool_3x3_s2(Tensor(x)).data, _pool_reference(x))
    assert max_pool_3x3_s2(Tensor(x)).shape == (2, 15, 20, 3)


# -- finite differences ------------------------------------------------------------


def _dense_case(rng):
    arrays = {"x": rng.normal(size=(5, 7)), "w": rng.normal(size=(7, 4)), "b": rng.normal(size=4)}
    R = rng.normal(size=(5, 4))

    def loss(P):
        y = P["x"] @ P["w"] + P["b"]
        z = y.tanh() * y.sigmoid() + y.softplus() - (y.square() + 1.0).sqrt() + (y.exp() * 0.1).log()
        return (z * R).sum() + y.log_softmax(-1).mean() + y.logsumexp(-1).sum()

    return loss, arrays


def _conv_pool_case(rng):
    arrays = {"x": rng.normal(size=(2, 9, 11, 3)), "w": rng.normal(size=(3, 3, 3, 4)) * 0.3, "b": rng.normal(size=4)}
    R = rng.normal(size=(2, 5, 6, 4))
    return (lambda P: (max_pool_3x3_s2(conv2d_3x3(P["x"], P["w"], P["b"])) * R).sum()), arrays


def _residual_case(rng):
    ps = ParameterSet()
    init_residual_stage(ps, "s", 3, 4, rng)
    arrays = {k: v.astype(float) for k, v in ps.items()}
    x = rng.normal(size=(2, 8, 10, 3))
    R = rng.normal(size=(2, 4, 5, 4))
    return (lambda P: (residual_stage(P, "s", Tensor(x)) * R).sum()), arrays


def lstm_unroll_case(rng, T=48, B=2, F=8, W=64):
    ps = ParameterSet()
    init_lstm(ps, "l", F, W, rng)
    arrays = {k: v.astype(float) for k, v in ps.items()}
    xs = rng.normal(size=(T, B, F))
    R = rng.normal(size=(T, B, W))
    h0 = rng.normal(size=(B, W)) * 0.1

    def loss(P):
        h, c = Tensor(h0), Tensor(np.zeros((B, W)))
        total = 0.0
        for t in range(T):
            h, c = lstm_step(P, "l", Tensor(xs[t]), h, c)
            total = total + (h * R[t]).sum()
        return total

    return loss, arrays


def _policy_case(rng):
    net = PolicyNetwork(NetworkConfig(), "vision")
    arrays = {k: v.astype(float) for k, v in net.init(rng).items()}
    obs = _obs(rng, 3, 1)
    starts = np.array([[True], [False], [True]])
    a = rng.normal(size=(3, 1, ACTION_DIM))

    def loss(P):
        mean, std, _, _ = net.sequence(P, obs, net.zero_state(1, np.float64), starts)
        return -gaussian_log_prob(mean, std, a).sum()

    return loss, arrays


def _critic_case(rng):
    net = CriticNetwork(NetworkConfig(), "state")
    arrays = {k: v.astype(float) for k, v in net.init(rng).items()}
    obs = _obs(rng, 4, 2, frames=False)
    acts = rng.uniform(-1, 1, size=(4, 2, 3, ACTION_DIM))
    target = rng.dirichlet(np.ones(51), size=(4, 2, 3))

    def loss(P):
        core = net.core(P, obs)
        return -(net.logits(P, core, obs["privileged"], acts).log_softmax(-1) * target).sum(-1).mean()

    return loss, arrays


def _gaussian_case(rng):
    arrays = {"m": rng.normal(size=(4, 6)), "s": rng.uniform(0.2, 2, size=(4, 6))}
    mo, so, a = rng.normal(size=(4, 6)), rng.uniform(0.2, 2, size=(4, 6)), rng.normal(size=(4, 6))

    def loss(P):
        return (
            gaussian_log_prob(P["m"], P["s"], a).sum()
            + gaussian_kl(P["m"], P["s"], mo, so).sum()
            + kl_mean_part(mo, so, P["m"]).sum()
            + kl_cov_part(mo, so, P["s"]).sum()
        )

    return loss, arrays


@pytest.mark.parametrize(
    "case, kw",
    [
        (_dense_case, {}),
        (_conv_pool_case, {}),
        (_residual_case, {}),
        (lstm_unroll_case, {"coords": 3}),
        # thousands of relu units share each encoder weight: a 1e-4 stencil straddles kinks
        (_policy_case, {"coords": 2, "eps": 1e-5}),
        (_critic_case, {"coords": 3}),
        (_gaussian_case, {}),
    ],
    ids=["elementwise", "conv_pool", "residual", "lstm48", "policy_vision", "critic_ce", "gaussian"],
)
def test_gradients_match_finite_differences(case, kw, rng):
    assert worst_over_draws(case, DRAWS, rng, **kw) < TOL


# -- encoder / recurrent / heads --------------------------------------------------------


def test_zero_weights_give_zero_features(rng):
    net = PolicyNetwork(NetworkConfig(), "vision")
    P = net.init(rng, zero=True).tensors(False)
    obs = {"frame": np.zeros((2, 30, 40, 3), np.uint8), "proprio": np.zeros((2, PROPRIO_DIM))}
    feats = net.torso.features(P, obs)
    assert feats.shape == (2, NetworkConfig().feature_width)
    assert np.all(feats.data == 0)


def test_feature_width_for_random_input(rng):
    cfg = replace(NetworkConfig(), feature_width=96)
    net = PolicyNetwork(cfg, "vision")
    P = net.init(rng).tensors(False)
    obs = {"frame": rng.integers(0, 256, (5, 30, 40, 3)).astype(np.uint8), "proprio": rng.normal(size=(5, PROPRIO_DIM))}
    assert net.torso.features(P, obs).shape == (5, 96)


def test_frame_shape_mismatch_is_config_error(rng):
    net = PolicyNetwork(NetworkConfig(), "vision")
    P = net.init(rng).tensors(False)
    with pytest.raises(NetworkConfigError):
        net.torso.features(P, {"frame": np.zeros((1, 32, 32, 3)), "proprio": np.zeros((1, PROPRIO_DIM))})


def test_lstm_zero_weights_zero_state():
    ps = ParameterSet()
    init_lstm(ps, "l", 5, 64, np.random.default_rng(0))
    for k in ps:
        ps[k] = np.zeros_like(ps[k])
    P = ps.tensors(False)
    h, c = lstm_step(P, "l", Tensor(np.ones((1, 5))), Tensor(np.zeros((1, 64))), Tensor(np.zeros((1, 64))))
    # i = f = o = 0.5, g = tanh(0) = 0: c' = 0.5*0 + 0.5*0, h' = 0.5*tanh(0)
    assert np.all(h.data == 0) and np.all(c.data == 0)


def test_lstm_forget_bias_is_one():
    ps = ParameterSet()
    init_lstm(ps, "l", 3, 8, np.random.default_rng(0))
    b = ps["l.b"]
    assert np.all(b[8:16] == 1.0) and np.all(b[:8] == 0) and np.all(b[16:] == 0)


def test_policy_step_is_deterministic(rng):
    net = PolicyNetwork(NetworkConfig(), "vision")
    params = net.init(rng)
    obs = {"frame": rng.integers(0, 256, (2, 30, 40, 3)).astype(np.uint8), "proprio": rng.normal(size=(2, PROPRIO_DIM))}
    state = (rng.normal(size=(2, 64)).astype(np.float32), rng.normal(size=(2, 64)).astype(np.float32))
    a = net.step(params, obs, state)
    b = net.step(params, obs, state)
    for x, y in zip(a[:3], b[:3]):
        np.testing.assert_array_equal(x, y)
    np.testing.assert_array_equal(a[3][0], b[3][0])
    assert not np.array_equal(a[3][0], state[0])


def test_sequence_matches_stepwise(rng):
    net = PolicyNetwork(NetworkConfig(), "state")
    params = net.init(rng)
    obs = _obs(rng, 6, 3, frames=False)
    obs["frame"] = None
    state = net.zero_state(3)
    with no_grad():
        mean, std, _, _ = net.sequence(params.tensors(False), obs, state)
    s = state
    for t in range(6):
        m, sd, _, s = net.step(params, {k: v[t] for k, v in obs.items() if v is not None}, s)
        np.testing.assert_allclose(m, mean.data[t], rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(sd, std.data[t], rtol=1e-5, atol=1e-6)


def test_episode_start_resets_state(rng):
    net = PolicyNetwork(NetworkConfig(), "state")
    params = net.init(rng)
    obs = _obs(rng, 4, 1, frames=False)
    h = (rng.normal(size=(1, 64)).astype(np.float32), rng.normal(size=(1, 64)).astype(np.float32))
    starts = np.array([[False], [False], [True], [False]])
    with no_grad():
        P = params.tensors(False)
        m1 = net.sequence(P, obs, h, starts)[0].data
        tail = {k: v[2:] for k, v in obs.items() if v is not None}
        m2 = net.sequence(P, tail, net.zero_state(1))[0].data
    np.testing.assert_allclose(m1[2:], m2, rtol=1e-6, atol=1e-7)


def test_std_floor_holds_for_extreme_inputs(rng):
    net = PolicyNetwork(NetworkConfig(), "state")
    params = net.init(rng)
    params["policy.head.b"] = np.full(2 * ACTION_DIM, -1e4, dtype=np.float32)
    _, std, _, _ = net.step(params, {"proprio": np.zeros((1, PROPRIO_DIM)), "privileged": np.zeros((1, PRIVILEGED_DIM))}, net.zero_state(1))
    assert np.all(std >= 1e-4)


def test_log_prob_at_mean_closed_form(rng):
    std = rng.uniform(0.05, 3, size=6)
    mean = rng.normal(size=6)
    lp = float(gaussian_log_prob(mean, std, mean).data)
    assert lp == pytest.approx(-np.sum(np.log(std * np.sqrt(2 * np.pi))), rel=1e-12)


def _full_cov_kl(mp, sp, mq, sq):
    # KL between full-covariance Gaussians: 0.5 [tr(Sq^-1 Sp) + d' Sq^-1 d - k + ln det Sq / det Sp]
    Sp, Sq = np.diag(sp**2), np.diag(sq**2)
    Sqi = np.linalg.inv(Sq)
    d = mq - mp
    return 0.5 * (np.trace(Sqi @ Sp) + d @ Sqi @ d - len(mp) + np.log(np.linalg.det(Sq) / np.linalg.det(Sp)))


def test_kl_matches_closed_form(rng):
    net = PolicyNetwork(NetworkConfig(), "state")
    p1, p2 = net.init(rng), net.init(rng)
    obs = {"proprio": rng.normal(size=(1, PROPRIO_DIM)), "privileged": rng.normal(size=(1, PRIVILEGED_DIM))}
    m1, s1, _, _ = net.step(p1, obs, net.zero_state(1))
    m2, s2, _, _ = net.step(p2, obs, net.zero_state(1))
    m1, s1, m2, s2 = (np.asarray(x, float)[0] for x in (m1, s1, m2, s2))
    assert float(gaussian_kl(m1, s1, m2, s2).data) == pytest.approx(_full_cov_kl(m1, s1, m2, s2), abs=1e-6)


def test_kl_decomposition_matches_full_kl(rng):
    for _ in range(50):
        mo, so = rng.normal(size=6), rng.uniform(0.1, 2, size=6)
        mn, sn = rng.normal(size=6), rng.uniform(0.1, 2, size=6)
        assert float(kl_mean_part(mo, so, mn).data) == pytest.approx(_full_cov_kl(mo, so, mn, so), abs=1e-9)
        assert float(kl_cov_part(mo, so, sn).data) == pytest.approx(_full_cov_kl(mo, so, mo, sn), abs=1e-9)


def test_critic_head_uniform_and_normalised(rng):
    net = CriticNetwork(NetworkConfig(), "state")
    zero = net.init(rng, zero=True).tensors(False)
    core = Tensor(rng.normal(size=(3, 64)))
    logits = net.logits(zero, core, rng.normal(size=(3, PRIVILEGED_DIM)), rng.normal(size=(3, 2, ACTION_DIM)))
    np.testing.assert_allclose(logits.softmax(-1).data, 1 / 51)
    P = net.init(rng).tensors(False)
    logits = net.logits(P, core, rng.normal(size=(3, PRIVILEGED_DIM)), rng.normal(size=(3, 5, ACTION_DIM)))
    probs = logits.softmax(-1).data
    assert probs.shape == (3, 5, 51)
    np.testing.assert_allclose(probs.sum(-1), 1.0, atol=1e-6)
    ev = net.expected(logits)
    cfg = NetworkConfig()
    assert np.all(ev >= cfg.v_min) and np.all(ev <= cfg.v_max)


def test_critic_support_default():
    net = CriticNetwork(NetworkConfig())
    assert net.support.size == 51
    assert net.support[0] == -150 and net.support[-1] == 150


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=60), st.floats(-100, 100))
def test_log_softmax_shift_invariant(xs, c):
    x = np.asarray(xs)
    a = Tensor(x).log_softmax().data
    b = Tensor(x + c).log_softmax().data
    np.testing.assert_allclose(a, b, atol=1e-9)
    assert np.exp(a).sum() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_gaussian_kl_nonnegative(seed):
    r = np.random.default_rng(seed)
    kl = gaussian_kl(r.normal(size=6), r.uniform(1e-3, 3, 6), r.normal(size=6), r.uniform(1e-3, 3, 6)).data
    assert kl >= -1e-12


def test_no_nan_on_random_bounded_inputs(rng):
    net = PolicyNetwork(NetworkConfig(), "vision")
    params = net.init(rng)
    n, chunk = 10_000, 2_500
    for s in range(0, n, chunk):
        P = params.tensors()
        obs = {
            "frame": rng.integers(0, 256, (1, chunk, 30, 40, 3)).astype(np.uint8),
            "proprio": rng.uniform(-1, 1, (1, chunk, PROPRIO_DIM)),
        }
        mean, std, _, _ = net.sequence(P, obs, net.zero_state(chunk))
        a = rng.uniform(-1, 1, (1, chunk, ACTION_DIM))
        loss = -gaussian_log_prob(mean, std, a).mean()
        loss.backward()
        assert np.isfinite(loss.data)
        assert all(np.all(np.isfinite(P[k].grad)) for k in P)


# -- optimizer -------------------------------------------------------------------------


def test_adam_zero_gradient_keeps_params():
    ps = ParameterSet({"w": np.ones(3, np.float32)})
    opt = Adam(1e-3)
    opt.update(ps, {"w": np.ones(3, np.float32)})
    after_one = ps["w"].copy()
    m1 = opt.m["w"].copy()
    opt.update(ps, {"w": np.zeros(3, np.float32)})
    # zero gradient after a nonzero one still moves through momentum; a fresh optimizer does not
    fresh = Adam(1e-3)
    ps2 = ParameterSet({"w": np.ones(3, np.float32)})
    fresh.update(ps2, {"w": np.zeros(3, np.float32)})
    np.testing.assert_array_equal(ps2["w"], np.ones(3))
    np.testing.assert_allclose(opt.m["w"], 0.9 * m1)
    assert not np.array_equal(after_one, np.ones(3))


@pytest.mark.parametrize("g", [1e-6, 1e-2, 1.0, 1e3])
def test_adam_first_step_magnitude_is_lr(g):
    ps = ParameterSet({"w": np.zeros(4)})
    Adam(1e-4).update(ps, {"w": np.full(4, g)})
    # m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
    np.testing.assert_allclose(ps["w"], -1e-4 * g / (g + 1e-8), rtol=1e-7)
    assert abs(ps["w"][0]) == pytest.approx(1e-4, rel=1e-2)


def test_adam_non_finite_gradient_names_parameter():
    ps = ParameterSet({"a": np.zeros(2), "b": np.zeros(2)})
    with pytest.raises(OptimizerFault) as exc:
        Adam(1e-3).update(ps, {"a": np.zeros(2), "b": np.array([0.0, np.nan])})
    assert exc.value.name == "b"
    np.testing.assert_array_equal(ps["a"], 0)


def test_adam_zero_lr_is_identity(rng):
    ps = ParameterSet({"w": rng.normal(size=5)})
    before = ps.copy()
    opt = Adam(0.0)
    for _ in range(3):
        opt.update(ps, {"w": rng.normal(size=5)})
    assert ps.equal(before)


def test_learning_rates_default():
    cfg = LearnerConfig()
    assert cfg.actor_lr == 1e-4
    assert cfg.critic_lr == 1e-4
    assert cfg.temperature_lr == 1e-2
    assert cfg.tradeoff_lr == 1e-4


def test_clip_by_global_norm():
    g = {"a": np.array([3.0, 0.0]), "b": np.array([[4.0]])}
    clipped, norm = clip_by_global_norm(g, 1.0)
    assert norm == pytest.approx(5.0)
    assert np.sqrt(sum(np.sum(v**2) for v in clipped.values())) == pytest.approx(1.0)
    same, _ = clip_by_global_norm(g, 40.0)
    np.testing.assert_array_equal(same["a"], g["a"])


# -- parameter sets and snapshots --------------------------------------------------------


def test_psnap_round_trip_is_bit_exact(tmp_path, rng):
    params = PolicyNetwork(NetworkConfig(), "vision").init(rng)
    path = save_psnap(tmp_path / "p.psnap", params, {"observation": "vision", "step": 7})
    loaded, meta = load_psnap(path)
    assert list(loaded.keys()) == list(params.keys())
    for k in params:
        assert loaded[k].dtype == np.float32
        assert loaded[k].tobytes() == params[k].tobytes()
    assert meta["step"] == 7
    assert loaded.checksum() == params.checksum()


def test_psnap_header_magic(tmp_path):
    path = save_psnap(tmp_path / "p.psnap", ParameterSet({"w": np.ones((2, 3))}))
    assert path.read_bytes()[:5] == b"PSNAP"


@pytest.mark.parametrize("damage", ["truncate", "magic", "trailing", "missing"])
def test_psnap_damage_is_load_error(tmp_path, damage):
    path = save_psnap(tmp_path / "p.psnap", ParameterSet({"w": np.ones((2, 3)), "b": np.zeros(3)}))
    blob = path.read_bytes()
    if damage == "truncate":
        path.write_bytes(blob[:-5])
    elif damage == "magic":
        path.write_bytes(b"XSNAP" + blob[5:])
    elif damage == "trailing":
        path.write_bytes(blob + b"\0")
    else:
        path.unlink()
    with pytest.raises(SnapshotLoadError):
        load_psnap(path)


def test_parameter_set_rejects_shape_change_and_duplicates():
    ps = ParameterSet({"w": np.ones(3)})
    with pytest.raises(ValueError):
        ps["w"] = np.ones(4)
    with pytest.raises(ValueError):
        ps.add("w", np.ones(3))


def test_parameter_counts_are_stable():
    rng = np.random.default_rng(0)
    assert PolicyNetwork(NetworkConfig(), "vision").init(rng).num_parameters() == 106_588
    assert CriticNetwork(NetworkConfig(), "vision").init(rng).num_parameters() == 123_011
