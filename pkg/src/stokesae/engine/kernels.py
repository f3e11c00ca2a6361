"""Select the compiled kernels when available, the numpy fallback otherwise.

Set ``STOKESAE_BACKEND=python`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

_forced = os.environ.get("STOKESAE_BACKEND", "").lower()

if _forced == "python":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        if _forced == "cython":
            raise
        _impl = _kernels_py

BACKEND = _impl.BACKEND
im2col1d = _impl.im2col1d
col2im1d = _impl.col2im1d
maxpool1d_forward = _impl.maxpool1d_forward
maxpool1d_backward = _impl.maxpool1d_backward


def _as_2d(a):
    a = np.ascontiguousarray(a)
    return a.reshape(a.shape[0] if a.ndim > 1 else 1, -1)


def elu_forward(x, alpha):
    return _impl.elu_forward(_as_2d(x), alpha).reshape(np.shape(x))


def elu_backward(y, grad, alpha):
    grad = np.asarray(grad, dtype=y.dtype)
    return _impl.elu_backward(_as_2d(y), _as_2d(grad), alpha).reshape(y.shape)
