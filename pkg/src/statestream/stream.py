"""Persistent per-layer state caches and the stream forward path.

Each layer keeps an independent cache C of its most recent block output.
After attention, the hidden states are blended with the RMS-normalized
cache at strength alpha:

    h_blend = (1 - alpha) * h + alpha * rms_norm(C_slice)

and after the FFN the cache is overwritten with the block output. On a
layer's first pass the cache is seeded with the RMS-normalized block input.
Only the cache state is normalized before blending; this bounds the
injected magnitude regardless of how the cache evolves.

Alignment of the cache slice with the current positions is configurable:
"tail" (default) blends the most recent cached rows, "head" the literal
leading rows. Caches never participate in any gradient computation; this
engine is inference-only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CacheStateError, ShapeError
from .kernels import rms_norm
from .model import (KVCache, RunHooks, attention_block, ffn_swiglu,
                    transformer_forward)
from .modelio import ModelConfig, WeightBundle

ALPHA_DEFAULT = 0.027
ALPHA_RANGE_LOW = 0.013
ALPHA_RANGE_HIGH = 0.04


@dataclass(frozen=True)
class StreamConfig:
    """Blend strength, extra passes per token, and cache-slice policy.

    alpha in [0, 1]; the useful band is roughly [0.013, 0.04] with 0.027
    as the default. recursions counts EXTRA forward passes per token beyond
    the first. cache_norm selects the gain used when normalizing the cache:
    "layer" reuses the layer's pre-FFN norm gain, "unit" uses ones.
    """
    alpha: float = ALPHA_DEFAULT
    recursions: int = 0
    alignment: str = "tail"
    cache_norm: str = "layer"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ShapeError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.recursions < 0:
            raise ShapeError(f"recursions must be >= 0, got {self.recursions}")
        if self.alignment not in ("head", "tail"):
            raise ShapeError(f"alignment must be 'head' or 'tail', got {self.alignment!r}")
        if self.cache_norm not in ("layer", "unit"):
            raise ShapeError(f"cache_norm must be 'layer' or 'unit', got {self.cache_norm!r}")


class StateCache:
    """Per-layer persistent block-output cache (the latent state stream)."""

    def __init__(self, n_layers: int):
        self.n_layers = n_layers
        self.layers: list[np.ndarray | None] = [None] * n_layers

    def initialized(self, layer: int) -> bool:
        return self.layers[layer] is not None

    def cached_len(self, layer: int) -> int:
        c = self.layers[layer]
        return 0 if c is None else c.shape[1]

    def get(self, layer: int) -> np.ndarray:
        c = self.layers[layer]
        if c is None:
            raise CacheStateError(f"layer {layer} state cache uninitialized")
        return c


def cache_init(cache: StateCache, layer: int, x_normed: np.ndarray) -> None:
    """First-pass seeding: C = copy of the normalized block input."""
    if cache.initialized(layer):
        raise CacheStateError(f"layer {layer} state cache already initialized")
    if x_normed.ndim != 3:
        raise ShapeError(f"cache_init expects [b, s, d], got {x_normed.shape}")
    cache.layers[layer] = x_normed.copy()


def cache_blend(h: np.ndarray, cache: StateCache, layer: int, alpha: float,
                norm_gain: np.ndarray, eps: float, alignment: str = "tail") -> np.ndarray:
    """(1-alpha)*h + alpha*rms_norm(C_slice); the cache itself is unchanged.

    alpha == 0 degenerates to h itself (returned as-is, bit-identical).
    Under tail alignment the newest cached rows align with the newest
    positions; if fewer than s rows are cached only the trailing overlap is
    blended. Head alignment slices the leading rows and requires
    cached_len >= s.
    """
    if alpha == 0.0:
        return h
    c = cache.get(layer)
    b, s, d = h.shape
    cached_len = c.shape[1]
    if alignment == "head":
        if cached_len < s:
            raise ShapeError(
                f"layer {layer}: cached_len {cached_len} < s {s} under head alignment")
        c_slice = c[:, :s]
        normed = rms_norm(c_slice, norm_gain, eps)
        return (1.0 - alpha) * h + alpha * normed
    overlap = min(cached_len, s)
    c_slice = c[:, cached_len - overlap:]
    normed = rms_norm(c_slice, norm_gain, eps)
    if overlap == s:
        return (1.0 - alpha) * h + alpha * normed
    out = h.copy()
    out[:, s - overlap:] = (1.0 - alpha) * h[:, s - overlap:] + alpha * normed
    return out


def cache_update(cache: StateCache, layer: int, out: np.ndarray,
                 alignment: str = "tail") -> None:
    """Replace the cached rows for the current slice with the block output."""
    c = cache.get(layer)
    b, s, d = out.shape
    cached_len = c.shape[1]
    if s == cached_len:
        cache.layers[layer] = out.copy()
        return
    if s > cached_len:
        raise ShapeError(
            f"layer {layer}: update of {s} rows exceeds cached_len {cached_len}")
    if alignment == "head":
        c[:, :s] = out
    else:
        c[:, cached_len - s:] = out


def cache_reset(cache: StateCache) -> None:
    cache.layers = [None] * cache.n_layers


def _grow_cache(cache: StateCache, layer: int, x_normed: np.ndarray) -> None:
    # Prefill over more positions than are cached: new trailing rows are
    # seeded per the first-pass rule from the normalized block input.
    c = cache.get(layer)
    s = x_normed.shape[1]
    cached_len = c.shape[1]
    if s > cached_len:
        cache.layers[layer] = np.concatenate([c, x_normed[:, cached_len:].copy()], axis=1)


def block_forward_sst(x: np.ndarray, layer: int, kv: KVCache, state: StateCache,
                      start_pos: int, mask: np.ndarray, weights: WeightBundle,
                      cfg: ModelConfig, stream: StreamConfig, monitor=None) -> np.ndarray:
    p = f"layers.{layer}."
    x_normed = rms_norm(x, weights[p + "attn_norm"], cfg.norm_eps)
    h = x + attention_block(x_normed, layer, kv, start_pos, mask, weights, cfg)
    if not state.initialized(layer):
        cache_init(state, layer, x_normed)
    else:
        _grow_cache(state, layer, x_normed)
    if stream.cache_norm == "layer":
        blend_gain = weights[p + "ffn_norm"]
    else:
        blend_gain = np.ones(cfg.d_model, dtype=np.float32)
    h_blend = cache_blend(h, state, layer, stream.alpha, blend_gain,
                          cfg.norm_eps, stream.alignment)
    if monitor is not None:
        monitor.add(h_blend)
    out = h_blend + ffn_swiglu(rms_norm(h_blend, weights[p + "ffn_norm"], cfg.norm_eps),
                               layer, weights)
    cache_update(state, layer, out, stream.alignment)
    return out


def forward_sst(tokens, kv: KVCache, state: StateCache, start_pos: int,
                weights: WeightBundle, cfg: ModelConfig, stream: StreamConfig,
                hooks: RunHooks | None = None) -> np.ndarray:
    monitor = hooks.monitor if hooks is not None else None

    def block(x, layer, kv_, start_pos_, mask):
        return block_forward_sst(x, layer, kv_, state, start_pos_, mask,
                                 weights, cfg, stream, monitor=monitor)

    return transformer_forward(tokens, kv, start_pos, weights, cfg, block, hooks)


def cache_overhead(n_tokens: int, d_model: int, n_layers: int,
                   bytes_per_value: int) -> int:
    """Bytes of state cache for n_tokens of context.

    Reported against 16-bit storage by default callers even though this
    engine computes in float32, so headline numbers match half-precision
    deployments (e.g. 4096 x 32 x 2B = 256 KiB per token).
    """
    for name, v in (("n_tokens", n_tokens), ("d_model", d_model),
                    ("n_layers", n_layers), ("bytes_per_value", bytes_per_value)):
        if v < 0 or (name != "n_tokens" and v == 0):
            raise ShapeError(f"cache_overhead {name} must be positive, got {v}")
    return n_tokens * d_model * n_layers * bytes_per_value


class BlendMonitor:
    """Running RMS over every array fed to add(); cheap magnitude guard."""

    def __init__(self):
        self.sumsq = 0.0
        self.count = 0
        self.finite = True

    def add(self, arr: np.ndarray) -> None:
        if not np.isfinite(arr).all():
            self.finite = False
        self.sumsq += float(np.sum(np.square(arr, dtype=np.float64)))
        self.count += arr.size

    @property
    def rms(self) -> float:
        return float(np.sqrt(self.sumsq / self.count)) if self.count else 0.0
