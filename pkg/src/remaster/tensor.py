"""Reverse-mode autodiff over numpy arrays.

A :class:`Tensor` wraps a contiguous float array and records the operations
that produced it. Calling :meth:`Tensor.backward` on a scalar walks the
recorded graph once, accumulates gradients into every tensor that requires
them, and then drops the graph references (the tape does not survive a
backward pass).

Network data uses the (batch, channels, time, height, width) layout
throughout; the engine itself is rank-agnostic so that attention can reshape
feature volumes into matrices and losses can reduce to scalars. float32 is
the working precision; float64 is supported for gradient verification.
"""

from contextlib import contextmanager

import numpy as np

from .errors import ShapeError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    """Float array with optional gradient accumulation.

    ``grad`` is populated by :meth:`backward` and has the same shape and
    dtype as ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{tag})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Backpropagate from a scalar; clears the recorded graph afterwards."""
        if self.size != 1:
            raise ValueError(f"backward requires a scalar, got shape {self.shape}")
        if self._backward is None and not self.requires_grad:
            raise RuntimeError("backward on a detached scalar: nothing was recorded")

        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in order:
            node._parents = ()
            node._backward = None

    # -- arithmetic sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data, parents, backward_fn):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to ``shape``."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)

    def backward(dy):
        if a.requires_grad:
            a._accumulate(_unbroadcast(dy, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(dy, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)

    def backward(dy):
        if a.requires_grad:
            a._accumulate(_unbroadcast(dy, a.shape))
        if b.requires_grad:
            b._accumulate(-_unbroadcast(dy, b.shape))

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)

    def backward(dy):
        if a.requires_grad:
            a._accumulate(_unbroadcast(dy * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(dy * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def abs_(x):
    """Elementwise absolute value; the subgradient at 0 is 0."""
    sign = np.sign(x.data)

    def backward(dy):
        if x.requires_grad:
            x._accumulate(dy * sign)

    return _result(np.abs(x.data), (x,), backward)


def sum_all(x):
    def backward(dy):
        if x.requires_grad:
            x._accumulate(np.full(x.shape, dy.reshape(-1)[0], dtype=x.dtype))

    return _result(np.asarray(x.data.sum(), dtype=x.dtype), (x,), backward)


def mean_all(x):
    n = x.size

    def backward(dy):
        if x.requires_grad:
            x._accumulate(np.full(x.shape, dy.reshape(-1)[0] / n, dtype=x.dtype))

    return _result(np.asarray(x.data.mean(dtype=np.float64), dtype=x.dtype), (x,), backward)


def clamp(x, lo, hi):
    mask = (x.data >= lo) & (x.data <= hi)

    def backward(dy):
        if x.requires_grad:
            x._accumulate(dy * mask)

    return _result(np.clip(x.data, lo, hi), (x,), backward)


def reshape(x, shape):
    def backward(dy):
        if x.requires_grad:
            x._accumulate(dy.reshape(x.shape))

    return _result(x.data.reshape(shape), (x,), backward)


def check_finite(x, name="input"):
    """Reject NaN/Inf at layer boundaries."""
    data = x.data if isinstance(x, Tensor) else x
    if not np.isfinite(data).all():
        raise ValueError(f"{name} contains non-finite values")


def as_tensor5(x, name="input"):
    """Validate a (B,C,T,H,W) tensor at a network boundary."""
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.ndim != 5:
        raise ShapeError(f"{name} must be 5-D (B,C,T,H,W), got {t.ndim}-D", axis="rank")
    check_finite(t, name)
    return t
