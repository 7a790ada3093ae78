"""Attention building blocks in plain numpy.

These are the reference forms used by tests and diagnostics; the trainable
model records the same math on a tape (see ``model``).  The sharpening
function exposes its partial derivatives so the tape can treat it as a
single primitive with gradients flowing into the inputs and into both
exponents.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, ShapeError

KERNELS = ("sigmoid", "relu")


def kernel_map(h, kind: str = "sigmoid") -> np.ndarray:
    """Element-wise non-negative feature map applied to queries/keys."""
    h = np.asarray(h, dtype=np.float64)
    if kind == "sigmoid":
        out = np.empty_like(h)
        pos = h >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-h[pos]))
        e = np.exp(h[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    if kind == "relu":
        return np.maximum(h, 0.0)
    raise ContractError(f"unknown kernel kind {kind!r}; expected one of {KERNELS}")


def sharpen(x, p: float, q: float) -> np.ndarray:
    """Entropy-sharpening map ``x * log(1 + x**p) ** q`` applied element-wise.

    Defined for x >= 0 with the limit value 0 at x = 0.  Increasing and
    convex for p, q > 1, which is what makes it reduce row entropy of the
    attention map while its derivative grows only polylogarithmically.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ContractError(
            "sharpen requires non-negative input; apply the kernel map first"
        )
    return _sharpen_forward(x, float(p), float(q))


def _sharpen_forward(x: np.ndarray, p: float, q: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.log1p(x ** p)
        out = x * inner ** q
    return np.where(x > 0, out, 0.0)


def sharpen_with_partials(x: np.ndarray, p: float, q: float):
    """Value and partials (df/dx, df/dp, df/dq) of the sharpening map.

    With L = log(1 + x**p):
        df/dx = L**q + q * L**(q-1) * p * x**p / (1 + x**p)
        df/dp = x * q * L**(q-1) * x**p * log(x) / (1 + x**p)
        df/dq = x * L**q * log(L)
    At x = 0 the value and all partials vanish (p, q > 1).
    """
    x = np.asarray(x, dtype=np.float64)
    p, q = float(p), float(q)
    positive = x > 0
    xs = np.where(positive, x, 1.0)  # placeholder keeps logs finite
    xp = xs ** p
    L = np.log1p(xp)
    ratio = xp / (1.0 + xp)
    value = np.where(positive, xs * L ** q, 0.0)
    df_dx = np.where(positive, L ** q + q * L ** (q - 1.0) * p * ratio, 0.0)
    df_dp = np.where(positive, xs * q * L ** (q - 1.0) * ratio * np.log(xs), 0.0)
    # L can underflow to 0 for tiny x; the q-partial limit there is 0.
    safe_L = np.where(L > 0, L, 1.0)
    df_dq = np.where(positive & (L > 0), value * np.log(safe_L), 0.0)
    return value, df_dx, df_dp, df_dq


def linear_attention(q, k, v) -> np.ndarray:
    """Kernelized attention in right-associated order: ``q @ (k.T @ v)``.

    Never materializes the n-by-n score map, so cost is O(n * d^2).
    Inputs are assumed already kernel-mapped (and sharpened if enabled).
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ShapeError(f"incompatible shapes q={q.shape} k={k.shape} v={v.shape}")
    return q @ (k.T @ v)


def explicit_linear_map(q, k) -> np.ndarray:
    """The n-by-n map ``q @ k.T`` (diagnostics and oracles only)."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"incompatible shapes q={q.shape} k={k.shape}")
    return q @ k.T


def softmax_attention(q, k, v) -> np.ndarray:
    """Quadratic-cost baseline: ``row_softmax(q @ k.T / sqrt(d)) @ v``."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ShapeError(f"incompatible shapes q={q.shape} k={k.shape} v={v.shape}")
    scores = q @ k.T / np.sqrt(q.shape[1])
    scores -= scores.max(axis=1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=1, keepdims=True)
    return w @ v


def softmax_map(q, k) -> np.ndarray:
    """The row-stochastic score map of :func:`softmax_attention`."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    scores = q @ k.T / np.sqrt(q.shape[1])
    scores -= scores.max(axis=1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=1, keepdims=True)
    return w
