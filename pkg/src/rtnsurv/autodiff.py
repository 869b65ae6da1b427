"""Minimal reverse-mode automatic differentiation over numpy float64 arrays.

Just enough machinery for the hitting-time networks: broadcasting arithmetic,
matmul, 1-D valid convolution, erf/exp/log/relu, reductions, slicing and
fancy gathers, cumulative sums, and an Adam optimizer. Gradients are exact;
the test suite checks every op against central finite differences.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf as _erf

__all__ = ["Tensor", "tensor", "parameter", "concat", "conv1d", "softmax", "Adam"]

_TWO_OVER_SQRT_PI = 2.0 / np.sqrt(np.pi)


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, data, parents=(), backward_fn=None, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    # ---- graph traversal ---------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # ---- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _wrap(other)
        out = Tensor(self.data + other.data, (self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        out.backward_fn = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, (self,))
        out.backward_fn = lambda g: self.requires_grad and self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __mul__(self, other):
        other = _wrap(other)
        out = Tensor(self.data * other.data, (self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        out.backward_fn = bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other)
        out = Tensor(self.data / other.data, (self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / other.data**2, other.data.shape)
                )

        out.backward_fn = bw
        return out

    def __rtruediv__(self, other):
        return _wrap(other) / self

    def __matmul__(self, other):
        other = _wrap(other)
        out = Tensor(self.data @ other.data, (self, other))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ g)

        out.backward_fn = bw
        return out

    # ---- elementwise --------------------------------------------------------

    def exp(self):
        value = np.exp(self.data)
        out = Tensor(value, (self,))
        out.backward_fn = lambda g: self.requires_grad and self._accumulate(g * value)
        return out

    def log(self):
        out = Tensor(np.log(self.data), (self,))
        out.backward_fn = lambda g: self.requires_grad and self._accumulate(g / self.data)
        return out

    def erf(self):
        out = Tensor(_erf(self.data), (self,))

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * _TWO_OVER_SQRT_PI * np.exp(-self.data**2))

        out.backward_fn = bw
        return out

    def relu(self):
        mask = self.data > 0
        out = Tensor(np.where(mask, self.data, 0.0), (self,))
        out.backward_fn = lambda g: self.requires_grad and self._accumulate(g * mask)
        return out

    def abs(self):
        sign = np.sign(self.data)
        out = Tensor(np.abs(self.data), (self,))
        out.backward_fn = lambda g: self.requires_grad and self._accumulate(g * sign)
        return out

    def square(self):
        return self * self

    def clamp_min(self, floor: float):
        mask = self.data > floor
        out = Tensor(np.where(mask, self.data, floor), (self,))
        out.backward_fn = lambda g: self.requires_grad and self._accumulate(g * mask)
        return out

    # ---- shape ops ----------------------------------------------------------

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape), (self,))
        out.backward_fn = lambda g: self.requires_grad and self._accumulate(
            g.reshape(self.data.shape)
        )
        return out

    @property
    def T(self):
        out = Tensor(self.data.T, (self,))
        out.backward_fn = lambda g: self.requires_grad and self._accumulate(g.T)
        return out

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def bw(g):
            if not self.requires_grad:
                return
            if axis is None:
                self._accumulate(np.full_like(self.data, 1.0) * g)
                return
            gg = g if keepdims else np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(gg, self.data.shape).copy())

        out.backward_fn = bw
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def cumsum(self, axis: int):
        out = Tensor(np.cumsum(self.data, axis=axis), (self,))

        def bw(g):
            if self.requires_grad:
                rev = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
                self._accumulate(rev)

        out.backward_fn = bw
        return out

    def __getitem__(self, key):
        out = Tensor(self.data[key], (self,))

        def bw(g):
            if self.requires_grad:
                acc = np.zeros_like(self.data)
                np.add.at(acc, key, g)
                self._accumulate(acc)

        out.backward_fn = bw
        return out

    def gather(self, rows, cols):
        """out[k] = self[rows[k], cols[k]] with scatter-add backward."""
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        out = Tensor(self.data[rows, cols], (self,))

        def bw(g):
            if self.requires_grad:
                acc = np.zeros_like(self.data)
                np.add.at(acc, (rows, cols), g)
                self._accumulate(acc)

        out.backward_fn = bw
        return out

    def take_columns(self, cols):
        """out[:, k] = self[:, cols[k]] (duplicate columns allowed)."""
        cols = np.asarray(cols)
        out = Tensor(self.data[:, cols], (self,))

        def bw(g):
            if self.requires_grad:
                acc = np.zeros_like(self.data)
                np.add.at(acc, (slice(None), cols), g)
                self._accumulate(acc)

        out.backward_fn = bw
        return out


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=np.float64))


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def tensor(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def concat(tensors, axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    out = Tensor(np.concatenate(datas, axis=axis), tuple(tensors))
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    out.backward_fn = bw
    return out


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Valid 1-D convolution, stride 1: (B,C,L) * (O,C,K) + (O,) -> (B,O,L-K+1)."""
    K = w.data.shape[2]
    win = np.lib.stride_tricks.sliding_window_view(x.data, K, axis=2)
    value = np.einsum("bclk,ock->bol", win, w.data) + b.data[None, :, None]
    out = Tensor(value, (x, w, b))

    def bw(g):
        if w.requires_grad:
            w._accumulate(np.einsum("bol,bclk->ock", g, win))
        if b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            gpad = np.pad(g, ((0, 0), (0, 0), (K - 1, K - 1)))
            win_g = np.lib.stride_tricks.sliding_window_view(gpad, K, axis=2)
            x._accumulate(np.einsum("bolk,ock->bcl", win_g, w.data[:, :, ::-1]))

    out.backward_fn = bw
    return out


def softmax(z: Tensor, axis: int = -1) -> Tensor:
    shifted = z - Tensor(z.data.max(axis=axis, keepdims=True))
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


class Adam:
    """Adaptive-moment minimiser with the conventional constants."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * p.grad
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * p.grad**2
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
