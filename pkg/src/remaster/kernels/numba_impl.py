"""Numba-compiled convolution kernels (direct loops, no patch matrix).

Memory-lean alternative to the im2col path: peak transient allocation is one
output row. Loop order keeps the innermost axis contiguous so LLVM can
vectorize it. Accumulation order is fixed per output element, so results are
deterministic for any thread count.
"""

import numpy as np
from numba import njit, prange

BACKEND_NAME = "numba"


@njit(cache=True, fastmath=True, parallel=True)
def _forward(xp, w, bias, st, sh, sw):
    b, c, tp, hp, wp = xp.shape
    o = w.shape[0]
    kt, kh, kw = w.shape[2], w.shape[3], w.shape[4]
    to = (tp - kt) // st + 1
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    y = np.empty((b, o, to, ho, wo), dtype=xp.dtype)
    for bo in prange(b * o):
        bi = bo // o
        oi = bo % o
        for t in range(to):
            for yy in range(ho):
                acc = np.zeros(wo, dtype=xp.dtype)
                for ci in range(c):
                    for dt in range(kt):
                        for dh in range(kh):
                            row = xp[bi, ci, t * st + dt, yy * sh + dh]
                            for dw in range(kw):
                                wv = w[oi, ci, dt, dh, dw]
                                for x in range(wo):
                                    acc[x] += wv * row[x * sw + dw]
                for x in range(wo):
                    y[bi, oi, t, yy, x] = acc[x] + bias[oi]
    return y


@njit(cache=True, fastmath=True, parallel=True)
def _backward_input(dy, w, tp, hp, wp, st, sh, sw):
    b, o, to, ho, wo = dy.shape
    c = w.shape[1]
    kt, kh, kw = w.shape[2], w.shape[3], w.shape[4]
    dxp = np.zeros((b, c, tp, hp, wp), dtype=dy.dtype)
    for bc in prange(b * c):
        bi = bc // c
        ci = bc % c
        for oi in range(o):
            for t in range(to):
                for yy in range(ho):
                    drow = dy[bi, oi, t, yy]
                    for dt in range(kt):
                        for dh in range(kh):
                            out = dxp[bi, ci, t * st + dt, yy * sh + dh]
                            for dw in range(kw):
                                wv = w[oi, ci, dt, dh, dw]
                                for x in range(wo):
                                    out[x * sw + dw] += wv * drow[x]
    return dxp


@njit(cache=True, fastmath=True, parallel=True)
def _backward_weights(dy, xp, o, c, kt, kh, kw, st, sh, sw):
    b = dy.shape[0]
    to, ho, wo = dy.shape[2], dy.shape[3], dy.shape[4]
    dw_ = np.zeros((o, c, kt, kh, kw), dtype=dy.dtype)
    for oi in prange(o):
        for ci in range(c):
            for dt in range(kt):
                for dh in range(kh):
                    for dwk in range(kw):
                        acc = 0.0
                        for bi in range(b):
                            for t in range(to):
                                for yy in range(ho):
                                    drow = dy[bi, oi, t, yy]
                                    row = xp[bi, ci, t * st + dt, yy * sh + dh]
                                    for x in range(wo):
                                        acc += drow[x] * row[x * sw + dwk]
                        dw_[oi, ci, dt, dh, dwk] = acc
    return dw_


def conv3d_forward(xp, w, bias, stride):
    return _forward(xp, w, bias, stride[0], stride[1], stride[2])


def conv3d_backward_input(dy, w, xp_shape, stride):
    _, _, tp, hp, wp = xp_shape
    return _backward_input(dy, w, tp, hp, wp, stride[0], stride[1], stride[2])


def conv3d_backward_weights(dy, xp, w_shape, stride):
    o, c, kt, kh, kw = w_shape
    return _backward_weights(dy, xp, o, c, kt, kh, kw, stride[0], stride[1], stride[2])
