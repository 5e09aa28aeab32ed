"""Pure-numpy reference implementations of the hot kernels.

Signatures are shared with the compiled module (mmfuse._kernels._core); the
equivalence tests in tests/test_kernels.py hold both sides to the same
contracts. Shapes: R = rows, C = columns, G = mask groups with R = G * rows
per group (attention uses one key mask per batch element shared by all
head/query rows).
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "fallback"

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


def masked_softmax(scores: np.ndarray, key_valid: np.ndarray, rows_per_group: int) -> np.ndarray:
    """Row-wise softmax over the valid columns of each row's mask group.
    Invalid columns get probability 0; every group must have >= 1 valid column."""
    g = scores.shape[0] // rows_per_group
    valid = key_valid.astype(bool).reshape(g, 1, scores.shape[1])
    s = scores.reshape(g, rows_per_group, -1)
    s = np.where(valid, s, -np.inf)
    m = s.max(axis=-1, keepdims=True)
    e = np.exp(s - m)
    probs = e / e.sum(axis=-1, keepdims=True)
    return probs.reshape(scores.shape)


def masked_softmax_grad(probs: np.ndarray, grad: np.ndarray) -> np.ndarray:
    dot = np.sum(probs * grad, axis=-1, keepdims=True)
    return probs * (grad - dot)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * rstd
    y = xhat * gamma + beta
    return y, xhat, rstd[..., 0]


def layer_norm_grad(xhat: np.ndarray, rstd: np.ndarray, gamma: np.ndarray, dy: np.ndarray):
    d = xhat.shape[-1]
    dxhat = dy * gamma
    dgamma = np.sum(dy * xhat, axis=0)
    dbeta = np.sum(dy, axis=0)
    mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
    mean_dxhat_xhat = np.mean(dxhat * xhat, axis=-1, keepdims=True)
    dx = (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * rstd[:, None]
    return dx, dgamma, dbeta


def span_fill(token_embs: np.ndarray, spans: np.ndarray, total_frames: int):
    """Broadcast each token embedding over its half-open frame span.
    Returns (block [T, D] float32, covered [T] uint8)."""
    d = token_embs.shape[1]
    block = np.zeros((total_frames, d), dtype=np.float32)
    covered = np.zeros(total_frames, dtype=np.uint8)
    for k in range(spans.shape[0]):
        a, b = int(spans[k, 0]), int(spans[k, 1])
        block[a:b] = token_embs[k]
        covered[a:b] = 1
    return block, covered


def adamw_update(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    weight_decay: float,
    step: int,
) -> None:
    """Adam with decoupled weight decay, in place on (p, m, v)."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    p -= lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * p)


def gelu(x: np.ndarray) -> np.ndarray:
    inner = _SQRT_2_OVER_PI * (x + _GELU_C * x * x * x)
    np.tanh(inner, out=inner)
    inner += 1.0
    inner *= x
    inner *= 0.5
    return inner


def gelu_grad(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    inner = _SQRT_2_OVER_PI * (x + _GELU_C * x * x * x)
    t = np.tanh(inner)
    out = 1.0 - t * t
    out *= _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * x * x)
    out *= 0.5 * x
    out += 0.5 * (1.0 + t)
    out *= dy
    return out
