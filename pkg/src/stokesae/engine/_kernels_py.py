"""Pure-numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` must agree with them
bit-for-bit on the gather/scatter kernels and exactly on pooling.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "python"


def im2col1d(x, kernel):
    """Gather same-padded windows: ``cols[b, l, k*C + c] = x[b, l + k - p, c]``."""
    batch, length, channels = x.shape
    pad = (kernel - 1) // 2
    xp = np.zeros((batch, length + 2 * pad, channels), dtype=x.dtype)
    xp[:, pad:pad + length] = x
    # windows: (batch, length, channels, kernel) -> (batch, length, kernel, channels)
    win = sliding_window_view(xp, kernel, axis=1)
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(batch, length, kernel * channels)


def col2im1d(cols, kernel, channels):
    """Adjoint of :func:`im2col1d` (scatter-add back onto the unpadded axis)."""
    batch, length, _ = cols.shape
    pad = (kernel - 1) // 2
    cols = cols.reshape(batch, length, kernel, channels)
    out = np.zeros((batch, length + 2 * pad, channels), dtype=cols.dtype)
    for k in range(kernel):
        out[:, k:k + length] += cols[:, :, k]
    return out[:, pad:pad + length].copy()


def maxpool1d_forward(x, factor):
    batch, length, channels = x.shape
    win = x.reshape(batch, length // factor, factor, channels)
    idx = np.argmax(win, axis=2).astype(np.uint8)  # argmax keeps the first index on ties
    out = np.take_along_axis(win, idx[:, :, None, :].astype(np.intp), axis=2)[:, :, 0, :]
    return np.ascontiguousarray(out), idx


def maxpool1d_backward(grad, idx, factor):
    batch, out_len, channels = grad.shape
    dx = np.zeros((batch, out_len, factor, channels), dtype=grad.dtype)
    np.put_along_axis(dx, idx[:, :, None, :].astype(np.intp), grad[:, :, None, :], axis=2)
    return dx.reshape(batch, out_len * factor, channels)


def elu_forward(x, alpha):
    out = np.array(x, copy=True)
    neg = x <= 0
    np.expm1(x, out=out, where=neg)
    if alpha != 1:
        out[neg] *= alpha
    return out


def elu_backward(y, grad, alpha):
    """ELU gradient from the forward output: ``1`` where ``y > 0``, ``y + alpha`` elsewhere."""
    return np.where(y > 0, grad, grad * (y + y.dtype.type(alpha)))
