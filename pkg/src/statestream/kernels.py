"""Deterministic float32 dense kernels.

Every kernel is a pure function over float32 numpy arrays and is
bit-reproducible: given identical inputs it returns identical bits across
runs and machines honoring IEEE-754 single precision. Reductions use a
fixed, shape-derived order: matmul accumulates sequentially over the inner
dimension; softmax/rms_norm sums go through numpy's pairwise reduction,
which is a fixed binary tree for a given length. No BLAS, no threads.

NaN or Inf in any kernel input is a hard error (NonFiniteError), so a
magnitude explosion anywhere upstream surfaces at the next kernel call.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteError, ShapeError

# float32 exp overflows just past 88.72; clamp keeps sigmoid exact in
# range and monotone-saturating outside it without runtime warnings
_EXP_CLAMP = 88.0


def as_f32(x) -> np.ndarray:
    """Coerce to a C-contiguous float32 array."""
    return np.ascontiguousarray(x, dtype=np.float32)


def require_finite(name: str, x: np.ndarray) -> None:
    if not np.isfinite(x).all():
        raise NonFiniteError(f"non-finite values in {name}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of a [m,k] and b [k,n], accumulated sequentially over k.

    The accumulation order is fixed (t = 0..k-1, one rounded multiply and
    one rounded add per element per step), so the result is bit-identical
    to a naive scalar triple loop in float32.
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    require_finite("matmul lhs", a)
    require_finite("matmul rhs", b)
    m, k = a.shape
    n = b.shape[1]
    acc = np.zeros((m, n), dtype=np.float32)
    for t in range(k):
        acc += a[:, t, None] * b[None, t, :]
    return acc


def rms_norm(x: np.ndarray, gain: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Root-mean-square normalization over the last axis, scaled by gain."""
    if eps <= 0:
        raise ShapeError(f"rms_norm eps must be positive, got {eps}")
    if gain.ndim != 1 or x.shape[-1] != gain.shape[0]:
        raise ShapeError(f"rms_norm dim mismatch: x {x.shape}, gain {gain.shape}")
    require_finite("rms_norm input", x)
    require_finite("rms_norm gain", gain)
    ms = np.mean(np.square(x), axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(ms + eps)
    return x * inv * gain


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis with max-subtraction."""
    require_finite("softmax input", x)
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def silu(x: np.ndarray) -> np.ndarray:
    """Elementwise x * sigmoid(x)."""
    require_finite("silu input", x)
    z = np.clip(x, -_EXP_CLAMP, _EXP_CLAMP)
    return x * (1.0 / (1.0 + np.exp(-z)))


def rope_apply(x: np.ndarray, start_pos: int, theta_base: float = 10000.0) -> np.ndarray:
    """Rotary position embedding over [heads, s, head_dim].

    Adjacent value pairs (2i, 2i+1) are rotated by angle
    position / theta_base^(2i/head_dim) with position = start_pos + row.
    """
    if x.ndim != 3:
        raise ShapeError(f"rope_apply expects [heads, s, head_dim], got {x.shape}")
    head_dim = x.shape[-1]
    if head_dim % 2 != 0:
        raise ShapeError(f"rope_apply head_dim must be even, got {head_dim}")
    if start_pos < 0:
        raise ShapeError(f"rope_apply start_pos must be >= 0, got {start_pos}")
    require_finite("rope input", x)
    s = x.shape[1]
    inv_freq = theta_base ** (-np.arange(0, head_dim, 2, dtype=np.float64) / head_dim)
    angles = (start_pos + np.arange(s, dtype=np.float64))[:, None] * inv_freq[None, :]
    cos = np.cos(angles).astype(np.float32)[None, :, :]
    sin = np.sin(angles).astype(np.float32)[None, :, :]
    x0 = x[..., 0::2]
    x1 = x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = x0 * cos - x1 * sin
    out[..., 1::2] = x0 * sin + x1 * cos
    return out


def argmax_greedy(logits: np.ndarray) -> int:
    """Index of the maximum logit; ties break to the lowest index."""
    if logits.ndim != 1 or logits.shape[0] < 1:
        raise ShapeError(f"argmax_greedy expects a non-empty vector, got {logits.shape}")
    require_finite("argmax logits", logits)
    return int(np.argmax(logits))
