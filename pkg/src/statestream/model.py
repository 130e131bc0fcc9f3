"""Base (control) transformer forward path.

Embedding, per-layer grouped-query attention plus SwiGLU FFN with residuals
and RMSNorm, a position-indexed KV cache, final norm and output head. This
is exactly the path the stream variant modifies; residual adds live in the
block functions, not in the sub-ops.

Masked attention scores legitimately contain -inf (the causal mask), so the
score softmax is an internal helper rather than the strict public kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .kernels import matmul, require_finite, rms_norm, rope_apply, silu
from .modelio import ModelConfig, WeightBundle

NEG_INF = np.float32(-np.inf)


class KVCache:
    """Per-layer attention key/value store with an explicit advance contract.

    Entries at positions below cur_pos are persisted history; the slot at
    the current position may be rewritten any number of times (recursion
    passes) until the caller advances cur_pos.
    """

    def __init__(self, cfg: ModelConfig, batch: int = 1):
        shape = (cfg.n_layers, batch, cfg.n_kv_heads, cfg.max_seq, cfg.head_dim)
        self.k = np.zeros(shape, dtype=np.float32)
        self.v = np.zeros(shape, dtype=np.float32)
        self.max_seq = cfg.max_seq
        self.cur_pos = 0

    def write(self, layer: int, start_pos: int, k_new: np.ndarray, v_new: np.ndarray) -> None:
        s = k_new.shape[2]
        if start_pos + s > self.max_seq:
            raise ShapeError(f"kv write past max_seq: {start_pos}+{s} > {self.max_seq}")
        self.k[layer, :, :, start_pos:start_pos + s] = k_new
        self.v[layer, :, :, start_pos:start_pos + s] = v_new

    def view(self, layer: int, upto: int) -> tuple[np.ndarray, np.ndarray]:
        return self.k[layer, :, :, :upto], self.v[layer, :, :, :upto]

    def advance(self, n: int) -> None:
        if self.cur_pos + n > self.max_seq:
            raise ShapeError(f"kv advance past max_seq: {self.cur_pos}+{n} > {self.max_seq}")
        self.cur_pos += n

    def reset(self) -> None:
        self.k[:] = 0.0
        self.v[:] = 0.0
        self.cur_pos = 0

    def prefix_digest(self, upto: int | None = None) -> bytes:
        """Hashable snapshot of all persisted entries below `upto`."""
        import hashlib
        upto = self.cur_pos if upto is None else upto
        h = hashlib.sha256()
        h.update(self.k[:, :, :, :upto].tobytes())
        h.update(self.v[:, :, :, :upto].tobytes())
        return h.digest()


def causal_mask(s: int, start_pos: int) -> np.ndarray:
    """Additive mask [s, start_pos+s]: row i sees columns <= start_pos+i."""
    total = start_pos + s
    mask = np.zeros((s, total), dtype=np.float32)
    cols = np.arange(total)[None, :]
    rows = np.arange(s)[:, None]
    mask[cols > start_pos + rows] = NEG_INF
    return mask


def _masked_softmax_rows(scores: np.ndarray) -> np.ndarray:
    # -inf marks masked-out columns; every row has at least one finite entry
    # (a position always sees itself), so the max is finite and exp(-inf)=0.
    shifted = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def attention_block(x: np.ndarray, layer: int, kv: KVCache, start_pos: int,
                    mask: np.ndarray, weights: WeightBundle, cfg: ModelConfig) -> np.ndarray:
    """Grouped-query attention term for one layer (no residual add).

    Writes k/v for the current positions into the cache slots
    [start_pos, start_pos+s) and attends over positions [0, start_pos+s).
    cur_pos is NOT advanced here; persistence is the caller's decision.
    """
    b, s, d = x.shape
    if start_pos + s > cfg.max_seq:
        raise ShapeError(f"attention past max_seq: {start_pos}+{s} > {cfg.max_seq}")
    p = f"layers.{layer}."
    hd = cfg.head_dim
    group = cfg.n_heads // cfg.n_kv_heads
    scale = 1.0 / np.sqrt(hd)

    out = np.empty_like(x)
    for bi in range(b):
        xb = x[bi]
        q = matmul(xb, weights[p + "wq"]).reshape(s, cfg.n_heads, hd).transpose(1, 0, 2)
        k = matmul(xb, weights[p + "wk"]).reshape(s, cfg.n_kv_heads, hd).transpose(1, 0, 2)
        v = matmul(xb, weights[p + "wv"]).reshape(s, cfg.n_kv_heads, hd).transpose(1, 0, 2)
        q = rope_apply(q, start_pos, cfg.rope_theta)
        k = rope_apply(k, start_pos, cfg.rope_theta)
        kv.write(layer, start_pos, k[None, ...], v[None, ...])

        keys, vals = kv.view(layer, start_pos + s)
        keys, vals = keys[bi], vals[bi]
        heads_out = np.empty((cfg.n_heads, s, hd), dtype=np.float32)
        for h in range(cfg.n_heads):
            g = h // group
            scores = matmul(q[h], keys[g].T) * scale
            probs = _masked_softmax_rows(scores + mask)
            heads_out[h] = matmul(probs, vals[g])
        merged = heads_out.transpose(1, 0, 2).reshape(s, d)
        out[bi] = matmul(merged, weights[p + "wo"])
    return out


def ffn_swiglu(x: np.ndarray, layer: int, weights: WeightBundle) -> np.ndarray:
    """SwiGLU feed-forward term (no residual add): w_down(silu(gate) * up)."""
    b, s, d = x.shape
    p = f"layers.{layer}."
    flat = x.reshape(b * s, d)
    gate = silu(matmul(flat, weights[p + "w_gate"]))
    up = matmul(flat, weights[p + "w_up"])
    down = matmul(gate * up, weights[p + "w_down"])
    return down.reshape(b, s, d)


def block_forward_base(x: np.ndarray, layer: int, kv: KVCache, start_pos: int,
                       mask: np.ndarray, weights: WeightBundle, cfg: ModelConfig,
                       monitor=None) -> np.ndarray:
    p = f"layers.{layer}."
    h = x + attention_block(rms_norm(x, weights[p + "attn_norm"], cfg.norm_eps),
                            layer, kv, start_pos, mask, weights, cfg)
    if monitor is not None:
        monitor.add(h)
    return h + ffn_swiglu(rms_norm(h, weights[p + "ffn_norm"], cfg.norm_eps), layer, weights)


@dataclass
class RunHooks:
    """Observation-only plumbing threaded through a forward pass.

    trace: object with record(step, pass_idx, layer, position, state_row);
    trace_layers: layer indices to record, or None for the final layer only;
    monitor: object with add(array), fed the post-attention hidden states
    (base) or blended states (stream) for magnitude tracking.
    """
    trace: object | None = None
    trace_layers: frozenset[int] | None = None
    monitor: object | None = None
    step: int = 0
    pass_idx: int = 0

    def traced(self, layer: int, n_layers: int) -> bool:
        if self.trace is None:
            return False
        if self.trace_layers is None:
            return layer == n_layers - 1
        return layer in self.trace_layers


def transformer_forward(tokens, kv: KVCache, start_pos: int, weights: WeightBundle,
                        cfg: ModelConfig, block_fn, hooks: RunHooks | None = None) -> np.ndarray:
    """Shared driver: embed -> blocks -> final norm -> output head.

    block_fn(x, layer, kv, start_pos, mask) returns the block output; the
    base and stream paths differ only in that closure.
    """
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.size == 0:
        raise ShapeError("forward requires at least one token")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ShapeError(f"token id out of range for vocab {cfg.vocab_size}")
    b, s = ids.shape
    if start_pos + s > cfg.max_seq:
        raise ShapeError(f"context overflow: {start_pos}+{s} > {cfg.max_seq}")

    x = weights["tok_embedding"][ids.reshape(-1)].reshape(b, s, cfg.d_model)
    mask = causal_mask(s, start_pos)
    for layer in range(cfg.n_layers):
        x = block_fn(x, layer, kv, start_pos, mask)
        if hooks is not None and hooks.traced(layer, cfg.n_layers):
            hooks.trace.record(hooks.step, hooks.pass_idx, layer,
                               start_pos + s - 1, x[0, -1])
    x = rms_norm(x, weights["final_norm"], cfg.norm_eps)
    flat = x.reshape(b * s, cfg.d_model)
    logits = matmul(flat, weights["output"]).reshape(b, s, cfg.vocab_size)
    require_finite("logits", logits)
    return logits


def forward_base(tokens, kv: KVCache, start_pos: int, weights: WeightBundle,
                 cfg: ModelConfig, hooks: RunHooks | None = None) -> np.ndarray:
    monitor = hooks.monitor if hooks is not None else None

    def block(x, layer, kv_, start_pos_, mask):
        return block_forward_base(x, layer, kv_, start_pos_, mask, weights, cfg,
                                  monitor=monitor)

    return transformer_forward(tokens, kv, start_pos, weights, cfg, block, hooks)
