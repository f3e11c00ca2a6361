# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled gather/scatter and pooling kernels (same contracts as _kernels_py)."""
import numpy as np
cimport numpy as cnp
cimport cython
from libc.math cimport expm1, expm1f

cnp.import_array()

BACKEND = "cython"

ctypedef fused real:
    float
    double


def im2col1d(real[:, :, ::1] x, Py_ssize_t kernel):
    cdef Py_ssize_t batch = x.shape[0], length = x.shape[1], channels = x.shape[2]
    cdef Py_ssize_t pad = (kernel - 1) // 2
    cdef Py_ssize_t b, l, k, c, src, base
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((batch, length, kernel * channels), dtype=dtype)
    cdef real[:, :, ::1] cols = out
    with nogil:
        for b in range(batch):
            for l in range(length):
                for k in range(kernel):
                    src = l + k - pad
                    if src < 0 or src >= length:
                        continue
                    base = k * channels
                    for c in range(channels):
                        cols[b, l, base + c] = x[b, src, c]
    return out


def col2im1d(real[:, :, ::1] cols, Py_ssize_t kernel, Py_ssize_t channels):
    cdef Py_ssize_t batch = cols.shape[0], length = cols.shape[1]
    cdef Py_ssize_t pad = (kernel - 1) // 2
    cdef Py_ssize_t b, l, k, c, src, base
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((batch, length, channels), dtype=dtype)
    cdef real[:, :, ::1] dx = out
    # k-outer order matches the numpy fallback's summation order exactly
    with nogil:
        for b in range(batch):
            for k in range(kernel):
                base = k * channels
                for l in range(length):
                    src = l + k - pad
                    if src < 0 or src >= length:
                        continue
                    for c in range(channels):
                        dx[b, src, c] += cols[b, l, base + c]
    return out


def maxpool1d_forward(real[:, :, ::1] x, Py_ssize_t factor):
    cdef Py_ssize_t batch = x.shape[0], channels = x.shape[2]
    cdef Py_ssize_t out_len = x.shape[1] // factor
    cdef Py_ssize_t b, l, c, j, best_j
    cdef real best, v
    dtype = np.float32 if real is float else np.float64
    out = np.empty((batch, out_len, channels), dtype=dtype)
    idx = np.empty((batch, out_len, channels), dtype=np.uint8)
    cdef real[:, :, ::1] o = out
    cdef cnp.uint8_t[:, :, ::1] ix = idx
    with nogil:
        for b in range(batch):
            for l in range(out_len):
                for c in range(channels):
                    best = x[b, l * factor, c]
                    best_j = 0
                    for j in range(1, factor):
                        v = x[b, l * factor + j, c]
                        if v > best:
                            best = v
                            best_j = j
                    o[b, l, c] = best
                    ix[b, l, c] = <cnp.uint8_t>best_j
    return out, idx


def maxpool1d_backward(real[:, :, ::1] grad, cnp.uint8_t[:, :, ::1] idx, Py_ssize_t factor):
    cdef Py_ssize_t batch = grad.shape[0], out_len = grad.shape[1], channels = grad.shape[2]
    cdef Py_ssize_t b, l, c
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((batch, out_len * factor, channels), dtype=dtype)
    cdef real[:, :, ::1] dx = out
    with nogil:
        for b in range(batch):
            for l in range(out_len):
                for c in range(channels):
                    dx[b, l * factor + idx[b, l, c], c] = grad[b, l, c]
    return out


def elu_forward(real[:, ::1] x, double alpha):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef real v
    dtype = np.float32 if real is float else np.float64
    out = np.empty((n, m), dtype=dtype)
    cdef real[:, ::1] y = out
    with nogil:
        for i in range(n):
            for j in range(m):
                v = x[i, j]
                if v > 0:
                    y[i, j] = v
                elif real is float:
                    y[i, j] = <float>(alpha * expm1f(v))
                else:
                    y[i, j] = alpha * expm1(v)
    return out


def elu_backward(real[:, ::1] y, real[:, ::1] grad, double alpha):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1], i, j
    cdef real a = <real>alpha
    dtype = np.float32 if real is float else np.float64
    out = np.empty((n, m), dtype=dtype)
    cdef real[:, ::1] d = out
    with nogil:
        for i in range(n):
            for j in range(m):
                if y[i, j] > 0:
                    d[i, j] = grad[i, j]
                else:
                    d[i, j] = grad[i, j] * (y[i, j] + a)
    return out
