"""Conversions between 8-bit RGB frames and the normalized Lab representation.

The networks operate on L scaled to [0,1] (CIE L* / 100) and on a,b mapped
affinely from [-128,127] to [0,1]. Constants: D65 white point, sRGB
primaries and transfer function. Conversions run in float64 and clamp
out-of-gamut results.
"""

import numpy as np

_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_WHITE = np.array([0.95047, 1.0, 1.08883])
_DELTA = 6.0 / 29.0


def _srgb_to_linear(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c):
    c = np.clip(c, 0.0, 1.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1.0 / 2.4) - 0.055)


def _f(t):
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA**2) + 4.0 / 29.0)


def _f_inv(t):
    return np.where(t > _DELTA, t**3, 3.0 * _DELTA**2 * (t - 4.0 / 29.0))


def rgb_to_lab(rgb):
    """8-bit RGB (..., 3) to normalized (L, ab): L (...,), ab (..., 2), all in [0,1]."""
    rgb = np.asarray(rgb)
    lin = _srgb_to_linear(rgb.astype(np.float64) / 255.0)
    xyz = lin @ _RGB_TO_XYZ.T
    fxyz = _f(xyz / _WHITE)
    lstar = 116.0 * fxyz[..., 1] - 16.0
    astar = 500.0 * (fxyz[..., 0] - fxyz[..., 1])
    bstar = 200.0 * (fxyz[..., 1] - fxyz[..., 2])
    lum = (lstar / 100.0).astype(np.float32)
    ab = np.stack(
        [(astar + 128.0) / 255.0, (bstar + 128.0) / 255.0], axis=-1
    ).astype(np.float32)
    return lum, ab


def _lab_to_linear(lstar, astar, bstar):
    fy = (lstar + 16.0) / 116.0
    fx = fy + astar / 500.0
    fz = fy - bstar / 200.0
    xyz = np.stack([_f_inv(fx), _f_inv(fy), _f_inv(fz)], axis=-1) * _WHITE
    return xyz @ _XYZ_TO_RGB.T


def lab_to_rgb(lum, ab):
    """Normalized (L, ab) back to 8-bit RGB (..., 3).

    Out-of-gamut colors are mapped by scaling chroma toward neutral until
    the linear RGB is realizable, so luminance is always honored exactly
    (zero luminance composes to black whatever the chroma says).
    """
    lstar = np.asarray(lum, dtype=np.float64) * 100.0
    astar = np.asarray(ab, dtype=np.float64)[..., 0] * 255.0 - 128.0
    bstar = np.asarray(ab, dtype=np.float64)[..., 1] * 255.0 - 128.0
    lstar, astar, bstar = np.broadcast_arrays(lstar, astar, bstar)
    lin = _lab_to_linear(lstar, astar, bstar)

    tol = 1e-6
    bad = ((lin < -tol) | (lin > 1.0 + tol)).any(axis=-1)
    if bad.any():
        l_b, a_b, b_b = lstar[bad], astar[bad], bstar[bad]
        lo = np.zeros_like(l_b)
        hi = np.ones_like(l_b)
        for _ in range(24):
            mid = 0.5 * (lo + hi)
            trial = _lab_to_linear(l_b, a_b * mid, b_b * mid)
            ok = ((trial >= -tol) & (trial <= 1.0 + tol)).all(axis=-1)
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        lin[bad] = _lab_to_linear(l_b, a_b * lo, b_b * lo)

    srgb = _linear_to_srgb(lin)
    return np.clip(np.round(srgb * 255.0), 0, 255).astype(np.uint8)


def split_clip(frames):
    """RGB frame stack (T,H,W,3) uint8 to network channels: L (1,T,H,W), ab (2,T,H,W)."""
    lum, ab = rgb_to_lab(frames)
    return lum[None, ...], np.moveaxis(ab, -1, 0)


def compose_output(luma, chroma):
    """Luminance (T,H,W) and chrominance (2,T,H,W), both [0,1], to RGB (T,H,W,3) uint8."""
    luma = np.asarray(luma)
    chroma = np.asarray(chroma)
    if chroma.shape[0] != 2 or chroma.shape[1:] != luma.shape:
        raise ValueError(
            f"chrominance {chroma.shape} does not match luminance {luma.shape}"
        )
    return lab_to_rgb(luma, np.moveaxis(chroma, 0, -1))


def greyscale(frames):
    """Luminance channel of RGB frames: (T,H,W,3) uint8 -> (T,H,W) float32 [0,1]."""
    return rgb_to_lab(frames)[0]
