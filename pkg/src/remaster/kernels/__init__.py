"""Convolution kernel backends.

Two interchangeable implementations of the hot 3-D convolution kernels:

* ``numba`` -- @njit direct loops, low transient memory (the default when
  numba imports cleanly);
* ``numpy`` -- im2col plus BLAS matmul, faster on machines with a strong
  BLAS at the cost of a large unrolled patch matrix.

Selection: the ``REMASTER_BACKEND`` environment variable (``numba``,
``numpy``, or ``auto``), or :func:`select_backend` at runtime.
``REMASTER_THREADS`` caps numba's worker threads.
"""

import os

from . import numpy_impl

_IMPL = None
_NUMBA_ERROR = None


def _load_numba_impl():
    global _NUMBA_ERROR
    try:
        from . import numba_impl
        return numba_impl
    except ImportError as exc:  # pragma: no cover - depends on host install
        _NUMBA_ERROR = exc
        return None


def select_backend(name):
    """Switch the active kernel backend; returns the name actually selected."""
    global _IMPL
    if name == "numpy":
        _IMPL = numpy_impl
    elif name == "numba":
        impl = _load_numba_impl()
        if impl is None:
            raise RuntimeError(f"numba backend unavailable: {_NUMBA_ERROR}")
        _IMPL = impl
    elif name == "auto":
        impl = _load_numba_impl()
        _IMPL = impl if impl is not None else numpy_impl
    else:
        raise ValueError(f"unknown backend {name!r}; expected numba|numpy|auto")
    return _IMPL.BACKEND_NAME


def backend_name():
    return _IMPL.BACKEND_NAME


def _init_threads():
    raw = os.environ.get("REMASTER_THREADS")
    if not raw:
        return
    try:
        import numba
        numba.set_num_threads(max(1, min(int(raw), numba.config.NUMBA_NUM_THREADS)))
    except (ImportError, ValueError):  # pragma: no cover
        pass


def conv3d_forward(xp, w, bias, stride):
    return _IMPL.conv3d_forward(xp, w, bias, stride)


def conv3d_backward_input(dy, w, xp_shape, stride):
    return _IMPL.conv3d_backward_input(dy, w, xp_shape, stride)


def conv3d_backward_weights(dy, xp, w_shape, stride):
    return _IMPL.conv3d_backward_weights(dy, xp, w_shape, stride)


select_backend(os.environ.get("REMASTER_BACKEND", "auto"))
_init_threads()
