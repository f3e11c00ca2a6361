"""Differentiable array operations used by both autoencoders.

Activations are laid out channels-last: dense inputs are ``(batch, features)``
and sequence inputs are ``(batch, length, channels)``. Every ``*_forward``
has a matching ``*_backward`` that returns gradients for each operand.
"""
import numpy as np

from . import kernels
from .config import DEFAULTS, ConfigError, ShapeError


def _check_kernel(kernel):
    if kernel < 1 or kernel % 2 == 0:
        raise ConfigError(f"kernel width must be odd and >= 1, got {kernel}")


def _check_pool(length, factor):
    if factor < 2:
        raise ConfigError(f"pool factor must be >= 2, got {factor}")
    if length % factor:
        raise ShapeError(f"sequence length {length} is not divisible by pool factor {factor}")


# -- dense -----------------------------------------------------------------

def dense_forward(x, weights, bias):
    """``out[b, j] = sum_i x[b, i] * weights[i, j] + bias[j]``."""
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeError(f"dense: input {x.shape} incompatible with weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"dense: bias {bias.shape} does not match {weights.shape[1]} units")
    return x @ weights + bias


def dense_backward(x, weights, grad):
    return grad @ weights.T, x.T @ grad, grad.sum(axis=0)


# -- convolution -------------------------------------------------------------

def _conv_shapes(x, kernels_, bias):
    if x.ndim != 3:
        raise ShapeError(f"conv1d expects (batch, length, channels), got {x.shape}")
    if kernels_.ndim != 3:
        raise ShapeError(f"conv1d kernels must be (K, Cin, Cout), got {kernels_.shape}")
    _check_kernel(kernels_.shape[0])
    if x.shape[2] != kernels_.shape[1]:
        raise ShapeError(f"conv1d: input has {x.shape[2]} channels, kernels expect {kernels_.shape[1]}")
    if bias.shape != (kernels_.shape[2],):
        raise ShapeError(f"conv1d: bias {bias.shape} does not match {kernels_.shape[2]} filters")


def conv1d_forward(x, kernels_, bias, return_cols=False):
    """Stride-1, same-padded cross-correlation.

    ``out[b, l, o] = sum_{k, c} kernels[k, c, o] * x[b, l + k - (K - 1) // 2, c] + bias[o]``
    with zeros outside ``[0, L)``.
    """
    _conv_shapes(x, kernels_, bias)
    k, cin, cout = kernels_.shape
    batch, length, _ = x.shape
    cols = kernels.im2col1d(np.ascontiguousarray(x), k)
    out = (cols.reshape(batch * length, k * cin) @ kernels_.reshape(k * cin, cout)).reshape(batch, length, cout)
    out += bias
    if return_cols:
        return out, cols
    return out


def conv1d_backward(x, kernels_, grad, cols=None):
    k, cin, cout = kernels_.shape
    batch, length, _ = x.shape
    if cols is None:
        cols = kernels.im2col1d(np.ascontiguousarray(x), k)
    g2 = grad.reshape(batch * length, cout)
    dk = (cols.reshape(batch * length, k * cin).T @ g2).reshape(k, cin, cout)
    dcols = (g2 @ kernels_.reshape(k * cin, cout).T).reshape(batch, length, k * cin)
    dx = kernels.col2im1d(np.ascontiguousarray(dcols), k, cin)
    return dx, dk, grad.sum(axis=(0, 1))


def transpose_kernels(kernels_):
    """Map transposed-conv kernels ``(K, Cout, Cin)`` to the equivalent conv kernels ``(K, Cin, Cout)``."""
    return np.ascontiguousarray(kernels_[::-1].transpose(0, 2, 1))


def conv1d_transpose_forward(x, kernels_, bias, return_cols=False):
    """Stride-1, same-padded transposed convolution.

    ``kernels`` has shape ``(K, Cout, Cin)``. The result equals
    :func:`conv1d_forward` with every kernel reversed along its spatial axis,
    which is the adjoint of the same-padded convolution.
    """
    if kernels_.ndim != 3:
        raise ShapeError(f"conv1d_transpose kernels must be (K, Cout, Cin), got {kernels_.shape}")
    _check_kernel(kernels_.shape[0])
    return conv1d_forward(x, transpose_kernels(kernels_), bias, return_cols=return_cols)


def conv1d_transpose_backward(x, kernels_, grad, cols=None):
    dx, dk, db = conv1d_backward(x, transpose_kernels(kernels_), grad, cols=cols)
    return dx, np.ascontiguousarray(dk[::-1].transpose(0, 2, 1)), db


# -- pooling -----------------------------------------------------------------

def maxpool1d(x, factor=2):
    """Non-overlapping max pool; returns ``(out, argmax)``.

    ``argmax`` holds the within-window index of the winner, the lowest index
    on ties, so gradients route deterministically.
    """
    _check_pool(x.shape[1], factor)
    return kernels.maxpool1d_forward(np.ascontiguousarray(x), factor)


def maxpool1d_backward(grad, argmax, factor=2):
    return kernels.maxpool1d_backward(np.ascontiguousarray(grad), argmax, factor)


def avgpool1d(x, factor=2):
    _check_pool(x.shape[1], factor)
    batch, length, channels = x.shape
    return x.reshape(batch, length // factor, factor, channels).mean(axis=2)


def avgpool1d_backward(grad, factor=2):
    return np.repeat(grad, factor, axis=1) / grad.dtype.type(factor)


def upsample1d(x, factor=2):
    """Nearest-neighbour repetition along the length axis."""
    if factor < 2:
        raise ConfigError(f"upsample factor must be >= 2, got {factor}")
    return np.repeat(x, factor, axis=1)


def upsample1d_backward(grad, factor=2):
    batch, length, channels = grad.shape
    return grad.reshape(batch, length // factor, factor, channels).sum(axis=2)


# -- batch normalisation -----------------------------------------------------

def batchnorm_forward(x, gamma, beta, moving_mean, moving_var, training,
                      epsilon=DEFAULTS.bn_epsilon, momentum=DEFAULTS.bn_momentum):
    """Per-channel batch normalisation over every axis but the last.

    In training mode the batch statistics are used and the moving statistics
    are updated in place; otherwise the moving statistics are used.
    Returns ``(y, cache)``.
    """
    axes = tuple(range(x.ndim - 1))
    if training:
        count = int(np.prod([x.shape[a] for a in axes]))
        if x.shape[0] < 2 or count < 2:
            raise ShapeError("batch normalisation in training mode needs a batch of at least 2")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        moving_mean *= momentum
        moving_mean += (1 - momentum) * mean
        moving_var *= momentum
        moving_var += (1 - momentum) * var
    else:
        mean, var = moving_mean, moving_var
    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = (x - mean) * inv_std
    y = gamma * xhat + beta
    return y, (xhat, inv_std, training)


def batchnorm_backward(grad, gamma, cache):
    xhat, inv_std, training = cache
    axes = tuple(range(grad.ndim - 1))
    dgamma = (grad * xhat).sum(axis=axes)
    dbeta = grad.sum(axis=axes)
    if not training:
        return grad * (gamma * inv_std), dgamma, dbeta
    m = grad.size // grad.shape[-1]
    dx = (gamma * inv_std / m) * (m * grad - dbeta - xhat * dgamma)
    return dx, dgamma, dbeta


# -- activation --------------------------------------------------------------

def elu(x, alpha=DEFAULTS.elu_alpha):
    """``x`` for positive inputs, ``alpha * (exp(x) - 1)`` otherwise."""
    return kernels.elu_forward(x, alpha)


def elu_backward(y, grad, alpha=DEFAULTS.elu_alpha):
    """Gradient expressed through the forward output ``y``: ``alpha * exp(x) = y + alpha`` for ``x <= 0``."""
    return kernels.elu_backward(y, grad, alpha)
