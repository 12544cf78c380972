"""Differentiable operations used by the two networks.

Convolutions always use same-size padding: each axis is padded by
``kernel // 2`` on both sides, which makes the output extent
``ceil(input / stride)``. Temporal stride is fixed at 1.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError
from .tensor import Tensor, _result


@dataclass(frozen=True)
class ConvSpec:
    """Static description of one convolution layer."""

    kernel: tuple
    stride: tuple
    padding: str
    in_channels: int
    out_channels: int

    def __post_init__(self):
        if any(k < 1 or k % 2 == 0 for k in self.kernel):
            raise ValueError(f"kernel sizes must be odd and positive, got {self.kernel}")
        if self.stride[0] != 1:
            raise ValueError(f"temporal stride must be 1, got {self.stride[0]}")
        if self.padding not in ("zero", "replicate"):
            raise ValueError(f"unknown padding mode {self.padding!r}")

    @property
    def pad(self):
        return tuple(k // 2 for k in self.kernel)


def _pad5(x, pad, mode):
    pt, ph, pw = pad
    if pt == ph == pw == 0:
        return x
    widths = ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw))
    return np.pad(x, widths, mode="constant" if mode == "zero" else "edge")


def _unpad5(dxp, pad, mode, out_shape):
    """Fold a padded-input gradient back onto the original extent."""
    pt, ph, pw = pad
    if pt == ph == pw == 0:
        return dxp
    if mode == "replicate":
        dxp = dxp.copy()
        for axis, p in ((2, pt), (3, ph), (4, pw)):
            if p == 0:
                continue
            n = dxp.shape[axis]
            head = [slice(None)] * 5
            head[axis] = slice(0, p)
            edge = [slice(None)] * 5
            edge[axis] = slice(p, p + 1)
            dxp[tuple(edge)] += dxp[tuple(head)].sum(axis=axis, keepdims=True)
            tail = [slice(None)] * 5
            tail[axis] = slice(n - p, n)
            edge[axis] = slice(n - p - 1, n - p)
            dxp[tuple(edge)] += dxp[tuple(tail)].sum(axis=axis, keepdims=True)
    t, h, w = out_shape[2:]
    return dxp[:, :, pt : pt + t, ph : ph + h, pw : pw + w]


def conv3d(x, weights, bias, spec):
    """Same-size 3-D convolution of x (B,C,T,H,W) with weights (O,C,kt,kh,kw)."""
    if x.ndim != 5:
        raise ShapeError(f"conv3d input must be 5-D, got {x.ndim}-D", axis="rank")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(
            f"conv3d input has {x.shape[1]} channels, spec expects {spec.in_channels}",
            axis="channels",
        )
    expected_w = (spec.out_channels, spec.in_channels) + spec.kernel
    if weights.shape != expected_w:
        raise ShapeError(
            f"conv3d weights shaped {weights.shape}, expected {expected_w}",
            axis="weights",
        )
    if bias.shape != (spec.out_channels,):
        raise ShapeError(
            f"conv3d bias shaped {bias.shape}, expected ({spec.out_channels},)",
            axis="bias",
        )

    xp = _pad5(x.data, spec.pad, spec.padding)
    y = kernels.conv3d_forward(xp, weights.data, bias.data, spec.stride)

    def backward(dy):
        dy = np.ascontiguousarray(dy)
        if x.requires_grad:
            dxp = kernels.conv3d_backward_input(dy, weights.data, xp.shape, spec.stride)
            x._accumulate(_unpad5(dxp, spec.pad, spec.padding, x.shape))
        if weights.requires_grad:
            weights._accumulate(
                kernels.conv3d_backward_weights(dy, xp, weights.shape, spec.stride)
            )
        if bias.requires_grad:
            bias._accumulate(dy.sum(axis=(0, 2, 3, 4)))

    return _result(y, (x, weights, bias), backward)


def batch_norm(x, gamma, beta, state, training, momentum=0.1, eps=1e-5):
    """Per-channel batch normalization over the (B,T,H,W) axes.

    ``state`` is a :class:`BatchNormState`; in training mode its running
    statistics are advanced with the given momentum.
    """
    b, c, t, h, w = x.shape
    n = b * t * h * w
    if n == 0:
        raise ShapeError("batch_norm requires at least one element per channel", axis="batch")
    axes = (0, 2, 3, 4)

    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        state.mean[...] = (1.0 - momentum) * state.mean + momentum * mean
        state.var[...] = (1.0 - momentum) * state.var + momentum * var
    else:
        mean = state.mean.astype(x.dtype)
        var = state.var.astype(x.dtype)

    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(1, c, 1, 1, 1)) * inv.reshape(1, c, 1, 1, 1)
    y = gamma.data.reshape(1, c, 1, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1, 1)

    def backward(dy):
        if gamma.requires_grad:
            gamma._accumulate((dy * xhat).sum(axis=axes))
        if beta.requires_grad:
            beta._accumulate(dy.sum(axis=axes))
        if x.requires_grad:
            dxhat = dy * gamma.data.reshape(1, c, 1, 1, 1)
            if training:
                s1 = dxhat.sum(axis=axes, keepdims=True)
                s2 = (dxhat * xhat).sum(axis=axes, keepdims=True)
                dx = (inv.reshape(1, c, 1, 1, 1) / n) * (n * dxhat - s1 - xhat * s2)
            else:
                dx = dxhat * inv.reshape(1, c, 1, 1, 1)
            x._accumulate(dx)

    return _result(y, (x, gamma, beta), backward)


class BatchNormState:
    """Running mean/variance buffers for one normalization layer."""

    def __init__(self, channels, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)


def activation(x, kind, alpha=1.0):
    if kind == "elu":
        return elu(x, alpha)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def elu(x, alpha=1.0):
    neg = x.data <= 0
    y = np.where(neg, alpha * np.expm1(np.minimum(x.data, 0.0)), x.data)

    def backward(dy):
        if x.requires_grad:
            x._accumulate(dy * np.where(neg, y + alpha, 1.0))

    return _result(y, (x,), backward)


def tanh(x):
    y = np.tanh(x.data)

    def backward(dy):
        if x.requires_grad:
            x._accumulate(dy * (1.0 - y * y))

    return _result(y, (x,), backward)


def sigmoid(x):
    y = 1.0 / (1.0 + np.exp(-x.data))

    def backward(dy):
        if x.requires_grad:
            x._accumulate(dy * y * (1.0 - y))

    return _result(y, (x,), backward)


def _resize_matrix(n_in, n_out, dtype):
    """Linear interpolation matrix, half-pixel-centre convention."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    scale = n_in / n_out
    for o in range(n_out):
        src = min(max((o + 0.5) * scale - 0.5, 0.0), n_in - 1.0)
        i0 = int(np.floor(src))
        i1 = min(i0 + 1, n_in - 1)
        wgt = src - i0
        m[o, i0] += 1.0 - wgt
        m[o, i1] += wgt
    return m


def _apply_axis(arr, m, axis):
    moved = np.moveaxis(arr, axis, -1)
    out = moved @ m.T
    return np.ascontiguousarray(np.moveaxis(out, -1, axis))


def trilinear_resize(x, target):
    """Resize the (T,H,W) axes of a (B,C,T,H,W) tensor by trilinear interpolation."""
    tt, th, tw = target
    if min(target) < 1:
        raise ShapeError(f"resize target must be positive, got {target}", axis="target")
    mats = []
    for axis, (n_in, n_out) in zip((2, 3, 4), zip(x.shape[2:], (tt, th, tw))):
        mats.append(None if n_in == n_out else (axis, _resize_matrix(n_in, n_out, x.dtype)))

    y = x.data
    for entry in mats:
        if entry is not None:
            y = _apply_axis(y, entry[1], entry[0])

    def backward(dy):
        if x.requires_grad:
            g = dy
            for entry in reversed(mats):
                if entry is not None:
                    g = _apply_axis(g, entry[1].T, entry[0])
            x._accumulate(g)

    return _result(y, (x,), backward)


def matmul(a, b):
    """Matrix product; 2-D or batched 3-D operands with matching inner dims."""
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul inner dims disagree: {a.shape} @ {b.shape}", axis="inner"
        )

    def backward(dy):
        if a.requires_grad:
            a._accumulate(np.matmul(dy, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            b._accumulate(np.matmul(np.swapaxes(a.data, -1, -2), dy))

    return _result(np.matmul(a.data, b.data), (a, b), backward)


def swap_last2(x):
    """Transpose the trailing two axes (matrix transpose under matmul)."""

    def backward(dy):
        if x.requires_grad:
            x._accumulate(np.ascontiguousarray(np.swapaxes(dy, -1, -2)))

    return _result(np.ascontiguousarray(np.swapaxes(x.data, -1, -2)), (x,), backward)


def softmax_axis(x, axis):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(dy):
        if x.requires_grad:
            inner = (dy * y).sum(axis=axis, keepdims=True)
            x._accumulate(y * (dy - inner))

    return _result(y, (x,), backward)


def concat_channels(a, b):
    """Concatenate two (B,C,T,H,W) tensors along the channel axis."""
    for axis, name in ((0, "batch"), (2, "time"), (3, "height"), (4, "width")):
        if a.shape[axis] != b.shape[axis]:
            raise ShapeError(
                f"concat_channels {name} mismatch: {a.shape[axis]} vs {b.shape[axis]}",
                axis=name,
            )
    ca = a.shape[1]

    def backward(dy):
        if a.requires_grad:
            a._accumulate(dy[:, :ca])
        if b.requires_grad:
            b._accumulate(dy[:, ca:])

    return _result(np.concatenate((a.data, b.data), axis=1), (a, b), backward)
