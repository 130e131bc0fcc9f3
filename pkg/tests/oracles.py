"""Independent reference implementations used to check the engine.

Everything here is deliberately naive: scalar loops, float64 where the
check is tolerance-based, float32 scalar arithmetic where the check is
bitwise. None of it shares code with the engine kernels.
"""

import math

import numpy as np


def naive_matmul_f32(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Scalar triple loop with float32 rounding at every step."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float32)
    for i in range(m):
        for j in range(n):
            acc = np.float32(0.0)
            for t in range(k):
                acc = np.float32(acc + np.float32(a[i, t] * b[t, j]))
            out[i, j] = acc
    return out


def scalar_rms_norm(x: np.ndarray, gain: np.ndarray, eps: float) -> np.ndarray:
    """Float64 scalar-loop RMS norm over the last axis of a 1-D row."""
    d = x.shape[0]
    ms = sum(float(v) * float(v) for v in x) / d
    inv = 1.0 / math.sqrt(ms + eps)
    return np.array([float(x[i]) * inv * float(gain[i]) for i in range(d)])


def softmax_f64(row: np.ndarray) -> np.ndarray:
    """Extended-precision scalar softmax."""
    vals = [float(v) for v in row]
    mx = max(vals)
    exps = [math.exp(v - mx) for v in vals]
    total = sum(exps)
    return np.array([e / total for e in exps])


def scalar_silu(x: float) -> float:
    return x * (1.0 / (1.0 + math.exp(-x)))


def rope_reference(x: np.ndarray, start_pos: int, theta_base: float) -> np.ndarray:
    """Per-pair scalar trig rotation, float64."""
    heads, s, hd = x.shape
    out = np.zeros_like(x, dtype=np.float64)
    for h in range(heads):
        for r in range(s):
            pos = start_pos + r
            for i in range(hd // 2):
                angle = pos / (theta_base ** (2 * i / hd))
                c, sn = math.cos(angle), math.sin(angle)
                x0, x1 = float(x[h, r, 2 * i]), float(x[h, r, 2 * i + 1])
                out[h, r, 2 * i] = x0 * c - x1 * sn
                out[h, r, 2 * i + 1] = x0 * sn + x1 * c
    return out


def argmax_scan(v) -> int:
    best, best_i = None, -1
    for i, x in enumerate(v):
        if best is None or x > best:
            best, best_i = x, i
    return best_i


def gqa_attention_reference(x_normed: np.ndarray, prev_k: np.ndarray,
                            prev_v: np.ndarray, start_pos: int, weights,
                            layer: int, cfg) -> np.ndarray:
    """Brute-force grouped-query attention in float64.

    Materializes repeated kv heads, recomputes rotary factors per position,
    and applies the causal rule row by row. prev_k/prev_v hold the cached
    heads for positions [0, start_pos), shape [n_kv_heads, start_pos, hd].
    """
    s, d = x_normed.shape
    hd = cfg.head_dim
    n_h, n_kv = cfg.n_heads, cfg.n_kv_heads
    group = n_h // n_kv
    p = f"layers.{layer}."
    x64 = x_normed.astype(np.float64)

    q = (x64 @ weights[p + "wq"].astype(np.float64)).reshape(s, n_h, hd)
    k = (x64 @ weights[p + "wk"].astype(np.float64)).reshape(s, n_kv, hd)
    v = (x64 @ weights[p + "wv"].astype(np.float64)).reshape(s, n_kv, hd)

    def rot(vec, pos):
        out = np.zeros_like(vec)
        for i in range(hd // 2):
            angle = pos / (cfg.rope_theta ** (2 * i / hd))
            c, sn = math.cos(angle), math.sin(angle)
            out[2 * i] = vec[2 * i] * c - vec[2 * i + 1] * sn
            out[2 * i + 1] = vec[2 * i] * sn + vec[2 * i + 1] * c
        return out

    total = start_pos + s
    keys = np.zeros((n_h, total, hd))
    vals = np.zeros((n_h, total, hd))
    for h in range(n_h):
        g = h // group
        keys[h, :start_pos] = prev_k[g].astype(np.float64)
        vals[h, :start_pos] = prev_v[g].astype(np.float64)
        for r in range(s):
            keys[h, start_pos + r] = rot(k[r, g], start_pos + r)
            vals[h, start_pos + r] = v[r, g]

    out = np.zeros((s, d))
    for r in range(s):
        row = np.zeros((n_h, hd))
        for h in range(n_h):
            qr = rot(q[r, h], start_pos + r)
            limit = start_pos + r + 1
            scores = keys[h, :limit] @ qr / math.sqrt(hd)
            probs = softmax_f64(scores)
            row[h] = probs @ vals[h, :limit]
        out[r] = row.reshape(n_h * hd) @ weights[p + "wo"].astype(np.float64)
    return out


def swiglu_reference(x: np.ndarray, weights, layer: int) -> np.ndarray:
    """Float64 SwiGLU FFN over a [s, d] block, scalar gate."""
    p = f"layers.{layer}."
    x64 = x.astype(np.float64)
    gate = x64 @ weights[p + "w_gate"].astype(np.float64)
    up = x64 @ weights[p + "w_up"].astype(np.float64)
    gated = np.vectorize(scalar_silu)(gate) * up
    return gated @ weights[p + "w_down"].astype(np.float64)


def pearson_reference(samples: np.ndarray) -> np.ndarray:
    """Scalar-loop Pearson correlation between columns of [n_obs, n_dims]."""
    n_obs, n_dims = samples.shape
    out = np.eye(n_dims)
    means = samples.mean(axis=0)
    for i in range(n_dims):
        for j in range(n_dims):
            if i == j:
                continue
            xi = samples[:, i] - means[i]
            xj = samples[:, j] - means[j]
            denom = math.sqrt(float(xi @ xi)) * math.sqrt(float(xj @ xj))
            out[i, j] = 0.0 if denom == 0.0 else float(xi @ xj) / denom
    return out
