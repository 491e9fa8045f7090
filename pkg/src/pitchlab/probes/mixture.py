"""Gaussian-mixture probe heads on frozen recurrent features, and heatmaps of their densities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..config import ProbeConfig
from ..diffnet import Adam, ParameterSet
from ..diffnet.tensor import Tensor, as_tensor, no_grad
from ..errors import InsufficientDataError

TARGETS = ("self_position", "ball_position", "opponent_position")
LOG_2PI = math.log(2 * math.pi)


@dataclass
class MixtureDensity:
    """Batch of 2-D diagonal Gaussian mixtures: weights (N, M), means/stds (N, M, 2)."""

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __len__(self):
        return self.weights.shape[0]

    def __getitem__(self, i) -> "MixtureDensity":
        sl = slice(i, i + 1) if isinstance(i, (int, np.integer)) else i
        return MixtureDensity(self.weights[sl], self.means[sl], self.stds[sl])

    def log_prob(self, x) -> np.ndarray:
        """log p(x_n) for points (N, 2)."""
        x = np.asarray(x, dtype=float)[:, None, :]
        z = (x - self.means) / self.stds
        comp = -0.5 * np.sum(z * z, axis=-1) - np.sum(np.log(self.stds), axis=-1) - LOG_2PI
        a = np.log(np.maximum(self.weights, 1e-300)) + comp
        m = a.max(axis=1, keepdims=True)
        return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]

    def density_grid(self, xs, ys) -> np.ndarray:
        """Density of each mixture on the grid: (N, len(ys), len(xs))."""
        gx = (xs[None, None, None, :] - self.means[:, :, 0, None, None]) / self.stds[:, :, 0, None, None]
        gy = (ys[None, None, :, None] - self.means[:, :, 1, None, None]) / self.stds[:, :, 1, None, None]
        norm = self.weights / (2 * math.pi * self.stds[..., 0] * self.stds[..., 1])
        return np.einsum("nm,nmyx->nyx", norm, np.exp(-0.5 * (gx * gx + gy * gy)))

    def mean_position(self) -> np.ndarray:
        return np.einsum("nm,nmd->nd", self.weights, self.means)


@dataclass
class ProbeHead:
    """Linear map from frozen features to mixture parameters for one target."""

    target: str
    params: ParameterSet
    n_components: int
    std_floor: float = 1e-3
    frame: str = "global"
    shift: np.ndarray | None = None  # feature standardisation, folded into the linear map
    scale: np.ndarray | None = None

    def standardize(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if self.shift is None:
            return x
        return (x - self.shift) / self.scale

    @property
    def width(self) -> int:
        return self.params["probe.w"].shape[0]


def init_probe(target: str, width: int, n_components: int, rng, std_floor: float = 1e-3, frame: str = "global", init_spread: float = 1.0) -> ProbeHead:
    if target not in TARGETS:
        raise ValueError(f"unknown probe target {target!r}; expected one of {TARGETS}")
    M = n_components
    p = ParameterSet()
    p.add("probe.w", rng.normal(0.0, 0.01, (width, 5 * M)))
    bias = np.zeros(5 * M)
    # spread the initial means so components do not start identical
    bias[M : 3 * M] = rng.uniform(-init_spread, init_spread, 2 * M)
    bias[3 * M :] = math.log(math.expm1(0.5))
    p.add("probe.b", bias)
    return ProbeHead(target, p, M, std_floor, frame)


def _head_outputs(P, features, M: int, std_floor: float):
    x = as_tensor(np.asarray(features, dtype=P["probe.w"].dtype))
    out = x @ P["probe.w"] + P["probe.b"]
    logits = out[:, :M]
    means = out[:, M : 3 * M].reshape(-1, M, 2)
    stds = out[:, 3 * M :].reshape(-1, M, 2).softplus() + std_floor
    return logits, means, stds


def mixture_nll(P, features, targets, M: int, std_floor: float) -> Tensor:
    """Mean negative log-likelihood of 2-D targets (tensor-valued)."""
    logits, means, stds = _head_outputs(P, features, M, std_floor)
    y = np.asarray(targets, dtype=means.dtype)[:, None, :]
    z = (means * -1.0 + y) / stds
    comp = (z.square() * -0.5).sum(axis=-1) - stds.log().sum(axis=-1) - LOG_2PI
    logp = (logits.log_softmax(-1) + comp).logsumexp(-1)
    return logp.mean() * -1.0


def predict(head: ProbeHead, features) -> MixtureDensity:
    with no_grad():
        P = head.params.astype(np.float64).tensors(False)
        logits, means, stds = _head_outputs(P, head.standardize(features), head.n_components, head.std_floor)
    w = logits.softmax(-1).data
    return MixtureDensity(w, means.data, stds.data)


def probe_nll(head: ProbeHead, features, targets) -> float:
    return float(-np.mean(predict(head, features).log_prob(targets)))


def train_head(head: ProbeHead, features, targets, config: ProbeConfig | None = None, rng=None, steps: int | None = None, batch_size: int | None = None, lr: float | None = None, history: list | None = None) -> ProbeHead:
    """Adam on the mixture NLL; the features are constants, so nothing upstream can change."""
    config = config or ProbeConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    targets = np.asarray(targets, dtype=np.float64)
    n = len(targets)
    if n == 0:
        raise InsufficientDataError("no probe training samples")
    if head.shift is None:
        raw = np.asarray(features, dtype=np.float64)
        head.shift = raw.mean(axis=0)
        head.scale = np.maximum(raw.std(axis=0), 1e-6)
    features = head.standardize(features)
    steps = config.steps if steps is None else steps
    bs = min(n, config.batch_size if batch_size is None else batch_size)
    opt = Adam(config.lr if lr is None else lr)
    for _ in range(steps):
        idx = np.arange(n) if bs == n else rng.choice(n, bs, replace=False)
        P = head.params.astype(np.float64).tensors(True)
        loss = mixture_nll(P, features[idx], targets[idx], head.n_components, head.std_floor)
        loss.backward()
        if history is not None:
            history.append(float(loss.data))
        opt.update(head.params, {k: P[k].grad for k in head.params.keys()})
    return head


# -- heatmaps ------------------------------------------------------------------------


@dataclass
class Heatmap:
    grid: np.ndarray  # (rows, cols), normalised to [0, 1]; row 0 is y = -width/2
    xs: np.ndarray  # cell-centre x coordinates
    ys: np.ndarray
    argmax: tuple  # (x, y) of the densest cell centre

    @property
    def cell(self) -> tuple:
        return float(self.xs[1] - self.xs[0]), float(self.ys[1] - self.ys[0])


def grid_axes(length: float, width: float, resolution=(100, 80)):
    nx, ny = resolution
    xs = (np.arange(nx) + 0.5) * (length / nx) - length / 2
    ys = (np.arange(ny) + 0.5) * (width / ny) - width / 2
    return xs, ys


def heatmap(density: MixtureDensity, pitch, resolution=(100, 80)) -> Heatmap:
    """Density of a single mixture at cell centres over the pitch, scaled to [0, 1]."""
    xs, ys = grid_axes(pitch.length, pitch.width, resolution)
    g = density[0].density_grid(xs, ys)[0] if len(density) > 1 else density.density_grid(xs, ys)[0]
    iy, ix = np.unravel_index(int(np.argmax(g)), g.shape)
    lo, hi = float(g.min()), float(g.max())
    norm = (g - lo) / (hi - lo) if hi > lo else np.zeros_like(g)
    return Heatmap(norm, xs, ys, (float(xs[ix]), float(ys[iy])))


def argmax_positions(density: MixtureDensity, pitch, resolution=(100, 80), chunk: int = 256) -> np.ndarray:
    """Densest grid cell centre for every mixture in the batch: (N, 2)."""
    xs, ys = grid_axes(pitch.length, pitch.width, resolution)
    out = np.zeros((len(density), 2))
    for s in range(0, len(density), chunk):
        g = density[s : s + chunk].density_grid(xs, ys)
        flat = g.reshape(len(g), -1).argmax(axis=1)
        iy, ix = np.unravel_index(flat, g.shape[1:])
        out[s : s + chunk, 0] = xs[ix]
        out[s : s + chunk, 1] = ys[iy]
    return out


def write_pgm(path, grid) -> Path:
    """8-bit binary PGM; row 0 of ``grid`` becomes the bottom image row (y up)."""
    path = Path(path)
    g = np.clip(np.rint(np.asarray(grid, dtype=float) * 255.0), 0, 255).astype(np.uint8)[::-1]
    h, w = g.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + g.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    """Inverse of :func:`write_pgm`, values back in [0, 1]."""
    blob = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while blob[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(blob) and not blob[end : end + 1].isspace():
            end += 1
        tokens.append(blob[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM: {path}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.frombuffer(blob[pos + 1 : pos + 1 + w * h], dtype=np.uint8).reshape(h, w)
    return data[::-1].astype(float) / maxval
