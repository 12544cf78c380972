"""The restoration and colorization networks.

Both are fully convolutional encoder/decoder stacks over (B,C,T,H,W)
volumes. The restoration net cleans the greyscale input and emits the
luminance channel through a residual skip; the colorization net encodes the
restored luminance together with an arbitrary set of reference color images
and decodes two chrominance channels at full resolution, mixing
reference-conditioned attention (color evidence) with self-attention
(temporal consistency).

``width`` scales every internal channel count; 1.0 reproduces the reference
architecture, smaller power-of-two fractions give desk-scale models with
identical structure.
"""

import numpy as np

from .attention import SelfAttention, SourceRefAttention
from .errors import ShapeError
from .layers import Module, spatial, temporal
from .tensor import as_tensor5, clamp
from . import ops


def _trace(trace, name, t):
    if trace is not None:
        trace.append((name, (t.shape[1],) + tuple(t.shape[2:])))


class PreprocessNet(Module):
    """Greyscale restoration network: 1 channel in, 1 channel out, residual."""

    def __init__(self, width=1.0, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        c = lambda base: max(1, round(base * width))
        kw = dict(rng=rng, dtype=dtype)
        self.stem = temporal(1, c(64), stride=2, padding="replicate", **kw)
        self.enc1 = temporal(c(64), c(128), **kw)
        self.enc2 = temporal(c(128), c(128), **kw)
        self.down = temporal(c(128), c(256), stride=2, **kw)
        self.mid = [temporal(c(256), c(256), **kw) for _ in range(4)]
        self.up1 = temporal(c(256), c(128), **kw)
        self.dec1 = temporal(c(128), c(64), **kw)
        self.dec2 = temporal(c(64), c(64), **kw)
        self.up2 = temporal(c(64), c(16), **kw)
        self.out = temporal(c(16), 1, norm=False, act="tanh", **kw)
        self.width = width

    def forward(self, x, training=False, trace=None):
        x = as_tensor5(x, "restoration input")
        if x.shape[1] != 1:
            raise ShapeError(f"expected 1 input channel, got {x.shape[1]}", axis="channels")
        _, _, t, h, w = x.shape
        if h % 4 or w % 4:
            raise ShapeError(f"spatial dims must be divisible by 4, got {h}x{w}", axis="spatial")
        if x.data.min() < 0.0 or x.data.max() > 1.0:
            raise ValueError("restoration input must lie in [0,1]")
        _trace(trace, "input", x)

        y = self.stem(x, training)
        _trace(trace, "stem", y)
        y = self.enc1(y, training)
        _trace(trace, "enc1", y)
        y = self.enc2(y, training)
        _trace(trace, "enc2", y)
        y = self.down(y, training)
        _trace(trace, "down", y)
        for i, layer in enumerate(self.mid):
            y = layer(y, training)
            _trace(trace, f"mid{i + 1}", y)
        y = ops.trilinear_resize(y, (t, -(h // -2), -(w // -2)))
        y = self.up1(y, training)
        _trace(trace, "up1", y)
        y = self.dec1(y, training)
        _trace(trace, "dec1", y)
        y = self.dec2(y, training)
        _trace(trace, "dec2", y)
        y = ops.trilinear_resize(y, (t, h, w))
        y = self.up2(y, training)
        _trace(trace, "up2", y)
        y = self.out(y, training)
        _trace(trace, "out", y)
        y = clamp(x + y, 0.0, 1.0)
        _trace(trace, "residual", y)
        return y

    __call__ = forward


class SourceRefNet(Module):
    """Colorization network: restored luminance plus references to chrominance."""

    def __init__(self, width=1.0, gamma_init=0.0, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        c = lambda base: max(1, round(base * width))
        kw = dict(rng=rng, dtype=dtype)
        enc = [64, 128, 128, 256, 256, 256, 512, 512, 512]
        strides = [2, 1, 1, 2, 1, 1, 2, 1, 1]
        self.src_enc = [
            spatial(1 if i == 0 else c(enc[i - 1]), c(enc[i]), stride=strides[i], **kw)
            for i in range(9)
        ]
        self.ref_enc = [
            spatial(3 if i == 0 else c(enc[i - 1]), c(enc[i]), stride=strides[i], **kw)
            for i in range(9)
        ]

        cw = c(512)
        self.src16a = spatial(cw, cw, stride=2, **kw)
        self.src16b = spatial(cw, cw, **kw)
        self.ref16a = spatial(cw, cw, stride=2, **kw)
        self.ref16b = spatial(cw, cw, **kw)
        self.ref16c = spatial(cw, cw, **kw)
        self.attn16 = SourceRefAttention(cw, gamma_init=gamma_init, rng=rng, dtype=dtype)
        self.mix16 = temporal(cw, cw, **kw)
        self.self16 = SelfAttention(cw, gamma_init=gamma_init, rng=rng, dtype=dtype)

        self.attn8 = SourceRefAttention(cw, gamma_init=gamma_init, rng=rng, dtype=dtype)
        self.mix8a = temporal(cw, cw, **kw)
        self.mix8b = temporal(cw, cw, **kw)
        self.fuse8a = temporal(2 * cw, cw, **kw)
        self.fuse8b = temporal(cw, cw, **kw)
        self.self8 = SelfAttention(cw, gamma_init=gamma_init, rng=rng, dtype=dtype)

        self.dec0 = temporal(cw, c(256), **kw)
        self.dec1 = temporal(c(256), c(128), **kw)
        self.dec2 = temporal(c(128), c(64), **kw)
        self.dec3 = temporal(c(64), c(32), **kw)
        self.dec4 = temporal(c(32), c(16), **kw)
        self.dec5 = temporal(c(16), c(8), **kw)
        self.dec6 = temporal(c(8), 2, norm=False, act="sigmoid", **kw)
        self.width = width

    def forward(self, luma, refs=None, training=False, trace=None):
        luma = as_tensor5(luma, "colorization input")
        if luma.shape[1] != 1:
            raise ShapeError(f"expected 1 luminance channel, got {luma.shape[1]}", axis="channels")
        _, _, t, h, w = luma.shape
        if h % 16 or w % 16:
            raise ShapeError(f"spatial dims must be divisible by 16, got {h}x{w}", axis="spatial")
        if refs is not None:
            refs = as_tensor5(refs, "references")
            if refs.shape[2] == 0:
                refs = None
            elif refs.shape[1] != 3:
                raise ShapeError(
                    f"references must have 3 channels, got {refs.shape[1]}", axis="channels"
                )
            elif refs.shape[3] % 16 or refs.shape[4] % 16:
                raise ShapeError(
                    f"reference dims must be divisible by 16, got "
                    f"{refs.shape[3]}x{refs.shape[4]}",
                    axis="spatial",
                )
        _trace(trace, "src_input", luma)

        s = luma
        for i, layer in enumerate(self.src_enc):
            s = layer(s, training)
            _trace(trace, f"src_enc{i + 1}", s)
        r = None
        if refs is not None:
            _trace(trace, "ref_input", refs)
            r = refs
            for i, layer in enumerate(self.ref_enc):
                r = layer(r, training)
                _trace(trace, f"ref_enc{i + 1}", r)

        s16 = self.src16b(self.src16a(s, training), training)
        _trace(trace, "src16", s16)
        r16 = None
        if r is not None:
            r16 = self.ref16c(self.ref16b(self.ref16a(r, training), training), training)
            _trace(trace, "ref16", r16)
        y16 = self.attn16(s16, r16)
        _trace(trace, "attn16", y16)
        y16 = self.mix16(y16, training)
        _trace(trace, "mix16", y16)
        y16 = self.self16(y16)
        _trace(trace, "self16", y16)

        y8 = self.attn8(s, r)
        _trace(trace, "attn8", y8)
        y8 = self.mix8b(self.mix8a(y8, training), training)
        _trace(trace, "mix8", y8)
        up = ops.trilinear_resize(y16, tuple(y8.shape[2:]))
        y8 = ops.concat_channels(y8, up)
        _trace(trace, "concat8", y8)
        y8 = self.fuse8b(self.fuse8a(y8, training), training)
        _trace(trace, "fuse8", y8)
        y8 = self.self8(y8)
        _trace(trace, "self8", y8)

        d = self.dec0(y8, training)
        _trace(trace, "dec0", d)
        d = ops.trilinear_resize(d, (t, -(h // -4), -(w // -4)))
        d = self.dec1(d, training)
        _trace(trace, "dec1", d)
        d = self.dec2(d, training)
        _trace(trace, "dec2", d)
        d = ops.trilinear_resize(d, (t, -(h // -2), -(w // -2)))
        d = self.dec3(d, training)
        _trace(trace, "dec3", d)
        d = self.dec4(d, training)
        _trace(trace, "dec4", d)
        d = ops.trilinear_resize(d, (t, h, w))
        d = self.dec5(d, training)
        _trace(trace, "dec5", d)
        d = self.dec6(d, training)
        _trace(trace, "chroma", d)
        return d

    __call__ = forward


class RemasterModel(Module):
    """Restoration followed by colorization; luminance feeds the color net."""

    def __init__(self, width=1.0, gamma_init=0.0, seed=0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.preprocess = PreprocessNet(width=width, rng=rng, dtype=dtype)
        self.srnet = SourceRefNet(width=width, gamma_init=gamma_init, rng=rng, dtype=dtype)
        self.width = width

    def forward(self, x, refs=None, training=False, trace=None):
        luma = self.preprocess(x, training, trace)
        chroma = self.srnet(luma, refs, training, trace)
        return luma, chroma

    __call__ = forward
