"""Pure-numpy convolution kernels (im2col + BLAS matmul).

Trades transient memory for BLAS throughput. The unrolled patch matrix is
built in output-row blocks so the transient stays below ``_COL_BUDGET``
elements regardless of layer geometry. All functions operate on pre-padded
inputs; padding lives in the op layer.
"""

import numpy as np

BACKEND_NAME = "numpy"

_COL_BUDGET = 32 * 1024 * 1024  # elements per im2col block


def _out_dims(padded_shape, kshape, stride):
    _, _, tp, hp, wp = padded_shape
    kt, kh, kw = kshape
    st, sh, sw = stride
    return (tp - kt) // st + 1, (hp - kh) // sh + 1, (wp - kw) // sw + 1


def _row_blocks(b, c, k3, ho, wo):
    per_row = b * c * k3 * wo
    rows = max(1, min(ho, _COL_BUDGET // max(1, per_row)))
    for y0 in range(0, ho, rows):
        yield y0, min(y0 + rows, ho)


def _gather(xp, kshape, stride, t, y0, y1, wo):
    """Patch matrix for one output frame and row block: (B, C*k3, rows*Wo)."""
    b, c = xp.shape[:2]
    kt, kh, kw = kshape
    st, sh, sw = stride
    rows = y1 - y0
    out = np.empty((b, c, kt, kh, kw, rows, wo), dtype=xp.dtype)
    for dt in range(kt):
        for dh in range(kh):
            h0 = y0 * sh + dh
            for dw in range(kw):
                out[:, :, dt, dh, dw] = xp[
                    :, :,
                    t * st + dt,
                    h0 : h0 + rows * sh : sh,
                    dw : dw + wo * sw : sw,
                ]
    return out


def conv3d_forward(xp, w, bias, stride):
    """Valid cross-correlation of a padded (B,C,T,H,W) input with (O,C,kt,kh,kw) weights."""
    b = xp.shape[0]
    o, c = w.shape[:2]
    kshape = w.shape[2:]
    k3 = kshape[0] * kshape[1] * kshape[2]
    to, ho, wo = _out_dims(xp.shape, kshape, stride)
    w2d = np.ascontiguousarray(w.reshape(o, -1))
    y = np.empty((b, o, to, ho, wo), dtype=xp.dtype)
    for t in range(to):
        for y0, y1 in _row_blocks(b, c, k3, ho, wo):
            cols = _gather(xp, kshape, stride, t, y0, y1, wo)
            cols = cols.reshape(b, c * k3, (y1 - y0) * wo)
            y[:, :, t, y0:y1, :] = np.matmul(w2d, cols).reshape(b, o, y1 - y0, wo)
    y += bias.reshape(1, o, 1, 1, 1)
    return y


def conv3d_backward_input(dy, w, xp_shape, stride):
    b, o, to, ho, wo = dy.shape
    c = xp_shape[1]
    kt, kh, kw = w.shape[2:]
    k3 = kt * kh * kw
    st, sh, sw = stride
    w2dt = np.ascontiguousarray(w.reshape(o, -1).T)
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    for t in range(to):
        for y0, y1 in _row_blocks(b, c, k3, ho, wo):
            rows = y1 - y0
            dy_blk = np.ascontiguousarray(dy[:, :, t, y0:y1, :]).reshape(b, o, rows * wo)
            dcols = np.matmul(w2dt, dy_blk).reshape(b, c, kt, kh, kw, rows, wo)
            for dt in range(kt):
                for dh in range(kh):
                    h0 = y0 * sh + dh
                    for dw in range(kw):
                        dxp[
                            :, :,
                            t * st + dt,
                            h0 : h0 + rows * sh : sh,
                            dw : dw + wo * sw : sw,
                        ] += dcols[:, :, dt, dh, dw]
    return dxp


def conv3d_backward_weights(dy, xp, w_shape, stride):
    b, o = dy.shape[:2]
    to, ho, wo = dy.shape[2:]
    c = w_shape[1]
    kshape = w_shape[2:]
    k3 = kshape[0] * kshape[1] * kshape[2]
    dw2d = np.zeros((o, c * k3), dtype=np.float64)
    for t in range(to):
        for y0, y1 in _row_blocks(b, c, k3, ho, wo):
            rows = y1 - y0
            cols = _gather(xp, kshape, stride, t, y0, y1, wo)
            cols = cols.reshape(b, c * k3, rows * wo)
            dy_blk = np.ascontiguousarray(dy[:, :, t, y0:y1, :]).reshape(b, o, rows * wo)
            for bi in range(b):
                dw2d += np.matmul(dy_blk[bi], cols[bi].T)
    return dw2d.reshape(w_shape).astype(dy.dtype)
