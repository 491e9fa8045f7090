"""Tape-free reverse-mode autodiff over numpy arrays.

Each :class:`Tensor` remembers the tensors it was computed from and a closure
that maps its output gradient to input gradients.  ``backward`` walks the
graph in reverse topological order.  Graph nodes are only recorded when at
least one input requires a gradient, so inference through the same code path
costs nothing extra.

Arrays keep whatever float dtype they are created with: networks run in
float32, gradient checks run the identical graph in float64.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    # -- graph plumbing ---------------------------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        parents = tuple(p for p in parents)
        if _grad_enabled and any(p.requires_grad for p in parents):
            return Tensor(data, True, None, parents, backward)
        return Tensor(data)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf requiring grad."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                pg = _unbroadcast(pg, p.data.shape)
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- properties ---------------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # -- arithmetic ---------------------------------------------------------------

    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._lift(other)
        return Tensor._make(self.data + other.data, (self, other), lambda g: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        return Tensor._make(self.data - other.data, (self, other), lambda g: (g, -g))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data
        return Tensor._make(a * b, (self, other), lambda g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data
        return Tensor._make(a / b, (self, other), lambda g: (g / b, -g * a / (b * b)))

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, k):
        a = self.data
        return Tensor._make(a**k, (self,), lambda g: (g * k * a ** (k - 1),))

    def __matmul__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data

        def back(g):
            if b.ndim == 1:
                ga = np.multiply.outer(g, b)
                gb = np.tensordot(a, g, axes=(list(range(a.ndim - 1)), list(range(g.ndim))))
                return ga, gb
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            return ga, gb

        return Tensor._make(a @ b, (self, other), back)

    def __getitem__(self, idx):
        shape, dtype = self.data.shape, self.data.dtype

        basic = all(isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in (idx if isinstance(idx, tuple) else (idx,)))

        def back(g):
            out = np.zeros(shape, dtype=dtype)
            if basic:
                out[idx] = g
            else:
                np.add.at(out, idx, g)
            return (out,)

        return Tensor._make(self.data[idx], (self,), back)

    # -- reductions and shape ------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        shape = self.data.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis, keepdims) * (1.0 / n)

    def max(self, axis=None, keepdims=False):
        out = self.data.max(axis=axis, keepdims=True)
        mask = self.data == out
        mask = mask / mask.sum(axis=axis, keepdims=True)

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (g * mask,)

        res = out if keepdims else (out.reshape(()) if axis is None else np.squeeze(out, axis))
        return Tensor._make(res, (self,), back)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        return Tensor._make(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        return Tensor._make(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),))

    @property
    def T(self):
        return self.transpose()

    # -- elementwise ---------------------------------------------------------------

    def exp(self):
        y = np.exp(self.data)
        return Tensor._make(y, (self,), lambda g: (g * y,))

    def log(self):
        a = self.data
        return Tensor._make(np.log(a), (self,), lambda g: (g / a,))

    def sqrt(self):
        y = np.sqrt(self.data)
        return Tensor._make(y, (self,), lambda g: (g * 0.5 / y,))

    def square(self):
        a = self.data
        return Tensor._make(a * a, (self,), lambda g: (2.0 * g * a,))

    def abs(self):
        a = self.data
        return Tensor._make(np.abs(a), (self,), lambda g: (g * np.sign(a),))

    def relu(self):
        a = self.data
        return Tensor._make(np.maximum(a, 0), (self,), lambda g: (g * (a > 0),))

    def tanh(self):
        y = np.tanh(self.data)
        return Tensor._make(y, (self,), lambda g: (g * (1 - y * y),))

    def sigmoid(self):
        y = _sigmoid(self.data)
        return Tensor._make(y, (self,), lambda g: (g * y * (1 - y),))

    def softplus(self):
        a = self.data
        y = np.logaddexp(0, a).astype(a.dtype)
        return Tensor._make(y, (self,), lambda g: (g * _sigmoid(a),))

    def clip(self, low, high):
        a = self.data
        inside = (a >= low) & (a <= high)
        return Tensor._make(np.clip(a, low, high), (self,), lambda g: (g * inside,))

    def log_softmax(self, axis=-1):
        a = self.data
        z = a - a.max(axis=axis, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
        y = z - lse
        p = np.exp(y)
        return Tensor._make(y, (self,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))

    def softmax(self, axis=-1):
        a = self.data
        z = np.exp(a - a.max(axis=axis, keepdims=True))
        p = z / z.sum(axis=axis, keepdims=True)
        return Tensor._make(p, (self,), lambda g: (p * (g - (g * p).sum(axis=axis, keepdims=True)),))

    def logsumexp(self, axis=-1, keepdims=False):
        a = self.data
        m = a.max(axis=axis, keepdims=True)
        s = np.exp(a - m)
        lse = m + np.log(s.sum(axis=axis, keepdims=True))
        p = s / s.sum(axis=axis, keepdims=True)

        def back(g):
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (g * p,)

        return Tensor._make(lse if keepdims else np.squeeze(lse, axis), (self,), back)


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    if arr.dtype.kind != "f":
        arr = arr.astype(np.float32)
    return Tensor(arr)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._make(np.stack([t.data for t in tensors], axis=axis), tensors, back)


def where(cond, a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    return Tensor._make(np.where(cond, a.data, b.data), (a, b), lambda g: (g * cond, g * ~cond))


_CHUNK = 256
_CACHE_BYTES = 768 << 20
_window = np.lib.stride_tricks.sliding_window_view


def _im2col(xp, h, w):
    """Padded (n, h+2, w+2, c) -> (n*h*w, 9*c) patch matrix, laid out (dy, dx, c)."""
    n, c = xp.shape[0], xp.shape[-1]
    v = _window(xp, (3, 3), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
    return np.ascontiguousarray(v).reshape(n * h * w, 9 * c)


def conv2d_3x3(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padded 3x3 convolution, NHWC input, ``w`` shaped (3, 3, Cin, Cout).

    im2col + one matrix product per chunk of images; patches are rebuilt in
    the backward pass instead of being kept alive.
    """
    xd, wd = x.data, w.data
    n, h, wid, cin = xd.shape
    cout = wd.shape[-1]
    wmat = wd.reshape(9 * cin, cout)
    xp = np.pad(xd, ((0, 0), (1, 1), (1, 1), (0, 0)))
    out = np.empty((n, h, wid, cout), dtype=np.result_type(xd, wd))
    keep = _grad_enabled and w.requires_grad and n * h * wid * cin * 9 * xd.itemsize <= _CACHE_BYTES
    cached = []
    for s in range(0, n, _CHUNK):
        e = min(n, s + _CHUNK)
        cols = _im2col(xp[s:e], h, wid)
        if keep:
            cached.append(cols)
        out[s:e] = (cols @ wmat).reshape(e - s, h, wid, cout)
    out += b.data
    need_gx = x.requires_grad

    def back(g):
        # input gradient = correlation of the padded output gradient with the flipped kernel
        wflip = np.ascontiguousarray(wd[::-1, ::-1].transpose(0, 1, 3, 2)).reshape(9 * cout, cin)
        gp = np.pad(g, ((0, 0), (1, 1), (1, 1), (0, 0))) if need_gx else None
        gx = np.empty_like(xd, dtype=g.dtype) if need_gx else None
        gw = np.zeros((9 * cin, cout), dtype=g.dtype)
        for k, s in enumerate(range(0, n, _CHUNK)):
            e = min(n, s + _CHUNK)
            g2 = g[s:e].reshape(-1, cout)
            cols = cached[k] if cached else _im2col(xp[s:e], h, wid)
            gw += cols.T @ g2
            if need_gx:
                gx[s:e] = (_im2col(gp[s:e], h, wid) @ wflip).reshape(e - s, h, wid, cin)
        gw = gw.reshape(3, 3, cin, cout)
        return gx, gw, g.reshape(-1, cout).sum(axis=0)

    return Tensor._make(out, (x, w, b), back)


def max_pool_3x3_s2(x: Tensor) -> Tensor:
    """3x3 max pooling, stride 2, padding 1 (output ceil(H/2) x ceil(W/2))."""
    xd = x.data
    n, h, w, c = xd.shape
    ho, wo = (h - 1) // 2 + 1, (w - 1) // 2 + 1
    xp = np.pad(xd, ((0, 0), (1, 1), (1, 1), (0, 0)), constant_values=-np.inf)
    views = [(i, j) for i in range(3) for j in range(3)]

    def view(a, i, j):
        return a[:, i : i + 2 * ho - 1 : 2, j : j + 2 * wo - 1 : 2, :]

    out = view(xp, 0, 0).copy()
    for i, j in views[1:]:
        np.maximum(out, view(xp, i, j), out=out)

    def back(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        taken = np.zeros(out.shape, dtype=bool)
        for i, j in views:
            m = (view(xp, i, j) == out) & ~taken
            view(gxp, i, j)[...] += g * m
            taken |= m
        return (gxp[:, 1:-1, 1:-1, :],)

    return Tensor._make(out, (x,), back)
