"""Attention over reference feature positions.

The layer adds, to each source feature position, a gamma-scaled convex
combination of projected reference features. Weights come from the softmax
of dot products between channel-reduced encodings of both inputs, so each
source position distributes exactly unit weight over all reference
positions. With no reference input the layer is the identity, and with the
source fed as its own reference it acts as self-attention over time and
space.
"""

from contextlib import contextmanager

import numpy as np

from . import ops
from .errors import ShapeError
from .layers import ConvLayer, Module
from .tensor import Tensor, check_finite, reshape

_TRACE = None


@contextmanager
def trace_attention():
    """Collect (ref_positions, src_positions) for every attention matrix built."""
    global _TRACE
    prev = _TRACE
    _TRACE = []
    try:
        yield _TRACE
    finally:
        _TRACE = prev


class SourceRefAttention(Module):
    """Reference-conditioned attention layer with a learnt output gain.

    ``channels`` is the source feature width C; the reduced encoding width
    is C/8, so C must be divisible by 8. The gain starts at ``gamma_init``
    (default 0, making the layer an identity at initialization).
    """

    def __init__(self, channels, ref_channels=None, gamma_init=0.0, rng=None,
                 dtype=np.float32):
        if channels % 8 != 0:
            raise ShapeError(
                f"attention channels must be divisible by 8, got {channels}",
                axis="channels",
            )
        ref_channels = channels if ref_channels is None else ref_channels
        reduced = channels // 8
        kw = dict(kernel=(1, 1, 1), norm=False, act=None, rng=rng, dtype=dtype)
        self.src_enc = ConvLayer(channels, reduced, **kw)
        self.ref_enc = ConvLayer(ref_channels, reduced, **kw)
        self.val_enc = ConvLayer(ref_channels, channels, **kw)
        self.gamma = Tensor(np.asarray(gamma_init, dtype=dtype), requires_grad=True)
        self.channels = channels
        self.ref_channels = ref_channels

    def forward(self, h_s, h_r=None):
        if h_r is None:
            return h_s
        if h_s.ndim != 5 or h_r.ndim != 5:
            raise ShapeError("attention inputs must be 5-D (B,C,T,H,W)", axis="rank")
        if h_s.shape[0] != h_r.shape[0]:
            raise ShapeError(
                f"batch mismatch: source {h_s.shape[0]} vs reference {h_r.shape[0]}",
                axis="batch",
            )
        if h_s.shape[1] != self.channels:
            raise ShapeError(
                f"source has {h_s.shape[1]} channels, layer expects {self.channels}",
                axis="channels",
            )
        if h_r.shape[1] != self.ref_channels:
            raise ShapeError(
                f"reference has {h_r.shape[1]} channels, layer expects {self.ref_channels}",
                axis="channels",
            )
        check_finite(h_s, "attention source")
        check_finite(h_r, "attention reference")

        weights, v = self._attend(h_s, h_r)
        attended = reshape(ops.matmul(v, weights), h_s.shape)
        return h_s + self.gamma * attended

    def _attend(self, h_s, h_r):
        """Attention weights (B, ref positions, src positions) and values."""
        b = h_s.shape[0]
        n_src = h_s.shape[2] * h_s.shape[3] * h_s.shape[4]
        n_ref = h_r.shape[2] * h_r.shape[3] * h_r.shape[4]
        q = reshape(self.src_enc(h_s), (b, self.channels // 8, n_src))
        k = reshape(self.ref_enc(h_r), (b, self.channels // 8, n_ref))
        v = reshape(self.val_enc(h_r), (b, self.channels, n_ref))
        logits = ops.matmul(ops.swap_last2(k), q)
        if _TRACE is not None:
            _TRACE.append((n_ref, n_src))
        return ops.softmax_axis(logits, axis=1), v

    def attention_weights(self, h_s, h_r):
        """The per-source-position distribution over reference positions."""
        return self._attend(h_s, h_r)[0]

    __call__ = forward


class SelfAttention(SourceRefAttention):
    """Attention with the input used as its own reference."""

    def __init__(self, channels, gamma_init=0.0, rng=None, dtype=np.float32):
        super().__init__(channels, channels, gamma_init, rng, dtype)

    def forward(self, h):
        return super().forward(h, h)

    __call__ = forward
