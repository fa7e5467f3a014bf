"""Minimal reverse-mode autodiff on float64 numpy arrays.

Every operation used by the training losses is built from the primitives
here, so gradients are exact up to floating point and can be validated
against central finite differences. The tape is a DAG of `Tensor` nodes;
calling `backward()` on a scalar accumulates gradients into every
reachable node's `.grad`.
"""

from __future__ import annotations

import numpy as np

_GELU_C = np.sqrt(2.0 / np.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, inverting numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph holding a float64 array."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            # copy: g may alias a sibling's gradient or a cached array
            self.grad = np.array(g)
        else:
            self.grad += g

    def detach(self) -> "Tensor":
        """Constant copy: gradients do not flow past this node."""
        return Tensor(self.data.copy())

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        # iterative topological sort; graphs can exceed the recursion limit
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ---- arithmetic ----

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data, (self, other))

        def bw(g):
            self._accumulate(_unbroadcast(g, self.data.shape))
            other._accumulate(_unbroadcast(g, other.data.shape))

        out._backward = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, (self,))
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data, (self, other))

        def bw(g):
            self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        out._backward = bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * as_tensor(other).pow(-1.0)

    def __rtruediv__(self, other):
        return as_tensor(other) * self.pow(-1.0)

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data @ other.data, (self, other))

        def bw(g):
            self._accumulate(
                _unbroadcast(g @ other.data.swapaxes(-1, -2), self.data.shape)
            )
            other._accumulate(
                _unbroadcast(self.data.swapaxes(-1, -2) @ g, other.data.shape)
            )

        out._backward = bw
        return out

    def pow(self, p: float) -> "Tensor":
        out = Tensor(self.data**p, (self,))
        out._backward = lambda g: self._accumulate(g * p * self.data ** (p - 1.0))
        return out

    # ---- elementwise nonlinearities ----

    def exp(self) -> "Tensor":
        out = Tensor(np.exp(self.data), (self,))
        out._backward = lambda g: self._accumulate(g * out.data)
        return out

    def log(self) -> "Tensor":
        out = Tensor(np.log(self.data), (self,))
        out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def tanh(self) -> "Tensor":
        out = Tensor(np.tanh(self.data), (self,))
        out._backward = lambda g: self._accumulate(g * (1.0 - out.data**2))
        return out

    def gelu(self) -> "Tensor":
        x = self.data
        inner = _GELU_C * (x + 0.044715 * x**3)
        t = np.tanh(inner)
        out = Tensor(0.5 * x * (1.0 + t), (self,))

        def bw(g):
            dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
            self._accumulate(g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner))

        out._backward = bw
        return out

    def clip_min(self, floor: float) -> "Tensor":
        """max(x, floor); gradient passes only where x > floor."""
        out = Tensor(np.maximum(self.data, floor), (self,))
        out._backward = lambda g: self._accumulate(g * (self.data > floor))
        return out

    # ---- reductions ----

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape).copy())

        out._backward = bw
        return out

    def mean(self, axis=None, keepdims=False) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def logsumexp(self, axis: int = -1, keepdims: bool = False) -> "Tensor":
        """Max-shifted logsumexp. Rows that are entirely -inf yield -inf
        and propagate zero gradient (needed for hard CRF constraints)."""
        m = np.max(self.data, axis=axis, keepdims=True)
        m_safe = np.where(np.isfinite(m), m, 0.0)
        e = np.exp(self.data - m_safe)
        s = e.sum(axis=axis, keepdims=True)
        with np.errstate(divide="ignore"):
            val = m_safe + np.log(s)
        val = np.where(s > 0, val, -np.inf)
        if not keepdims:
            val = np.squeeze(val, axis=axis)
        out = Tensor(val, (self,))

        def bw(g):
            gg = np.expand_dims(g, axis) if not keepdims else g
            w = np.where(s > 0, e / np.where(s > 0, s, 1.0), 0.0)
            self._accumulate(gg * w)

        out._backward = bw
        return out

    def softmax(self, axis: int = -1) -> "Tensor":
        m = np.max(self.data, axis=axis, keepdims=True)
        e = np.exp(self.data - np.where(np.isfinite(m), m, 0.0))
        p = e / e.sum(axis=axis, keepdims=True)
        out = Tensor(p, (self,))

        def bw(g):
            dot = (g * p).sum(axis=axis, keepdims=True)
            self._accumulate(p * (g - dot))

        out._backward = bw
        return out

    # ---- shape / indexing ----

    def reshape(self, *shape) -> "Tensor":
        out = Tensor(self.data.reshape(*shape), (self,))
        out._backward = lambda g: self._accumulate(g.reshape(self.data.shape))
        return out

    def swapaxes(self, a: int, b: int) -> "Tensor":
        out = Tensor(self.data.swapaxes(a, b), (self,))
        out._backward = lambda g: self._accumulate(g.swapaxes(a, b))
        return out

    def take_rows(self, idx) -> "Tensor":
        """Gather rows along axis 0 (duplicate indices accumulate)."""
        idx = np.asarray(idx, dtype=np.intp)
        out = Tensor(self.data[idx], (self,))

        def bw(g):
            acc = np.zeros_like(self.data)
            np.add.at(acc, idx, g)
            self._accumulate(acc)

        out._backward = bw
        return out

    def __getitem__(self, key) -> "Tensor":
        out = Tensor(self.data[key], (self,))

        def bw(g):
            acc = np.zeros_like(self.data)
            np.add.at(acc, key, g)
            self._accumulate(acc)

        out._backward = bw
        return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor,
               eps: float = 1e-5) -> Tensor:
    """Fused last-axis layer norm; one tape node instead of ten."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = Tensor(gain.data * xhat + bias.data, (x, gain, bias))

    def bw(g):
        reduce_axes = tuple(range(g.ndim - 1))
        gain._accumulate((g * xhat).sum(axis=reduce_axes))
        bias._accumulate(g.sum(axis=reduce_axes))
        dxhat = g * gain.data
        x._accumulate(inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        ))

    out._backward = bw
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Fused x @ W + b for 2-D x."""
    out = Tensor(x.data @ weight.data + bias.data, (x, weight, bias))

    def bw(g):
        x._accumulate(g @ weight.data.T)
        weight._accumulate(x.data.T @ g)
        bias._accumulate(g.sum(axis=0))

    out._backward = bw
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t._accumulate(g[tuple(sl)])

    out._backward = bw
    return out


def stack_rows(tensors) -> Tensor:
    """Stack 1-D tensors into a matrix (axis 0)."""
    return concat([t.reshape(1, -1) for t in tensors], axis=0)
