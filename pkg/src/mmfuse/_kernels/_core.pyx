# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Mirrors mmfuse._kernels._fallback; float32 and
float64 variants via fused types. The softmax exponentials go through
numpy's vectorized exp; the masking, max and normalization passes are C
loops."""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport sqrt, tanh, INFINITY, pow

cnp.import_array()

BACKEND = "compiled"

ctypedef fused floating:
    float
    double

cdef double SQRT_2_OVER_PI = 0.7978845608028654
cdef double GELU_C = 0.044715


def masked_softmax(floating[:, ::1] scores, const unsigned char[:, ::1] key_valid,
                   Py_ssize_t rows_per_group):
    cdef Py_ssize_t r = scores.shape[0]
    cdef Py_ssize_t c = scores.shape[1]
    out = np.empty((r, c), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] ov = out
    cdef Py_ssize_t i, j, g
    cdef floating m, s
    for i in range(r):
        g = i // rows_per_group
        m = -INFINITY
        for j in range(c):
            if key_valid[g, j] and scores[i, j] > m:
                m = scores[i, j]
        for j in range(c):
            if key_valid[g, j]:
                ov[i, j] = scores[i, j] - m
            else:
                ov[i, j] = -INFINITY
    np.exp(out, out=out)
    for i in range(r):
        s = 0.0
        for j in range(c):
            s += ov[i, j]
        for j in range(c):
            ov[i, j] /= s
    return out


def masked_softmax_grad(floating[:, ::1] probs, floating[:, ::1] grad):
    cdef Py_ssize_t r = probs.shape[0]
    cdef Py_ssize_t c = probs.shape[1]
    out = np.empty((r, c), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef floating dot
    for i in range(r):
        dot = 0.0
        for j in range(c):
            dot += probs[i, j] * grad[i, j]
        for j in range(c):
            ov[i, j] = probs[i, j] * (grad[i, j] - dot)
    return out


def layer_norm(floating[:, ::1] x, floating[::1] gamma, floating[::1] beta, double eps):
    cdef Py_ssize_t r = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    dtype = np.float32 if floating is float else np.float64
    y = np.empty((r, d), dtype=dtype)
    xhat = np.empty((r, d), dtype=dtype)
    rstd = np.empty(r, dtype=dtype)
    cdef floating[:, ::1] yv = y
    cdef floating[:, ::1] hv = xhat
    cdef floating[::1] rv = rstd
    cdef Py_ssize_t i, j
    cdef floating mean, var, dev, rs
    for i in range(r):
        mean = 0.0
        for j in range(d):
            mean += x[i, j]
        mean /= d
        var = 0.0
        for j in range(d):
            dev = x[i, j] - mean
            var += dev * dev
        var /= d
        rs = <floating>(1.0 / sqrt(var + eps))
        rv[i] = rs
        for j in range(d):
            dev = (x[i, j] - mean) * rs
            hv[i, j] = dev
            yv[i, j] = dev * gamma[j] + beta[j]
    return y, xhat, rstd


def layer_norm_grad(floating[:, ::1] xhat, floating[::1] rstd, floating[::1] gamma,
                    floating[:, ::1] dy):
    cdef Py_ssize_t r = xhat.shape[0]
    cdef Py_ssize_t d = xhat.shape[1]
    dtype = np.float32 if floating is float else np.float64
    dx = np.empty((r, d), dtype=dtype)
    dgamma = np.zeros(d, dtype=dtype)
    dbeta = np.zeros(d, dtype=dtype)
    cdef floating[:, ::1] dxv = dx
    cdef floating[::1] dgv = dgamma
    cdef floating[::1] dbv = dbeta
    cdef Py_ssize_t i, j
    cdef floating m1, m2, dxh
    for i in range(r):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            dxh = dy[i, j] * gamma[j]
            m1 += dxh
            m2 += dxh * xhat[i, j]
            dgv[j] += dy[i, j] * xhat[i, j]
            dbv[j] += dy[i, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            dxv[i, j] = (dy[i, j] * gamma[j] - m1 - xhat[i, j] * m2) * rstd[i]
    return dx, dgamma, dbeta


def span_fill(const float[:, ::1] token_embs, const cnp.int64_t[:, ::1] spans,
              Py_ssize_t total_frames):
    cdef Py_ssize_t n = token_embs.shape[0]
    cdef Py_ssize_t d = token_embs.shape[1]
    block = np.zeros((total_frames, d), dtype=np.float32)
    covered = np.zeros(total_frames, dtype=np.uint8)
    cdef float[:, ::1] bv = block
    cdef unsigned char[::1] cv = covered
    cdef Py_ssize_t k, t, j
    cdef Py_ssize_t a, b
    for k in range(n):
        a = spans[k, 0]
        b = spans[k, 1]
        for t in range(a, b):
            cv[t] = 1
            for j in range(d):
                bv[t, j] = token_embs[k, j]
    return block, covered


@cython.linetrace(False)
def _adamw_1d(floating[::1] pv, const floating[::1] gv, floating[::1] mv, floating[::1] vv,
              double lr, double beta1, double beta2, double eps, double weight_decay,
              int step):
    cdef Py_ssize_t n = pv.shape[0]
    cdef Py_ssize_t i
    # Keep the inner loop in the array's own precision; per-element promotion
    # to double costs more than it buys here.
    cdef floating b1 = <floating>beta1
    cdef floating b2 = <floating>beta2
    cdef floating one_minus_b1 = <floating>(1.0 - beta1)
    cdef floating one_minus_b2 = <floating>(1.0 - beta2)
    cdef floating inv_bc1 = <floating>(1.0 / (1.0 - pow(beta1, step)))
    cdef floating inv_bc2 = <floating>(1.0 / (1.0 - pow(beta2, step)))
    cdef floating lr_f = <floating>lr
    cdef floating eps_f = <floating>eps
    cdef floating wd_f = <floating>weight_decay
    cdef floating mhat, vhat, g
    for i in range(n):
        g = gv[i]
        mv[i] = b1 * mv[i] + one_minus_b1 * g
        vv[i] = b2 * vv[i] + one_minus_b2 * g * g
        mhat = mv[i] * inv_bc1
        vhat = vv[i] * inv_bc2
        pv[i] -= lr_f * (mhat / (sqrt(vhat) + eps_f) + wd_f * pv[i])


def adamw_update(p, g, m, v, double lr, double beta1, double beta2,
                 double eps, double weight_decay, int step):
    _adamw_1d(p.ravel(), np.ascontiguousarray(g).ravel(), m.ravel(), v.ravel(),
              lr, beta1, beta2, eps, weight_decay, step)


def gelu(x):
    # numpy's SIMD tanh beats a scalar loop here; keep the math identical to
    # the fallback so backends agree bit-for-bit.
    inner = SQRT_2_OVER_PI * (x + GELU_C * x * x * x)
    np.tanh(inner, out=inner)
    inner += 1.0
    inner *= x
    inner *= 0.5
    return inner


def gelu_grad(x, dy):
    inner = SQRT_2_OVER_PI * (x + GELU_C * x * x * x)
    t = np.tanh(inner)
    out = 1.0 - t * t
    out *= SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x)
    out *= 0.5 * x
    out += 0.5 * (1.0 + t)
    out *= dy
    return out
