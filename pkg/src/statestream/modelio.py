"""Model configuration, weight container I/O, and a byte-level tokenizer.

File formats (both versioned with the magic string "SSTW1"):

* Config: flat key/value text, one `key value` pair per line, `#` comments
  allowed. First non-comment line must be the magic.
* Weights: a text header listing every tensor as
  `tensor <name> <dtype> <shape-csv> <offset> <nbytes>` followed by an
  `end` line and the concatenated raw little-endian payloads. Tensors are
  written sorted by name, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError, ShapeError

MAGIC = "SSTW1"

BOS_ID = 256
EOS_ID = 257
PAD_ID = 258
SPECIAL_IDS = {BOS_ID, EOS_ID, PAD_ID}
BYTE_VOCAB_SIZE = 256 + len(SPECIAL_IDS)

_CONFIG_FIELDS = {
    "d_model": int,
    "n_layers": int,
    "n_heads": int,
    "n_kv_heads": int,
    "d_ff": int,
    "vocab_size": int,
    "max_seq": int,
    "rope_theta": float,
    "norm_eps": float,
}


@dataclass(frozen=True)
class ModelConfig:
    d_model: int
    n_layers: int
    n_heads: int
    n_kv_heads: int
    d_ff: int
    vocab_size: int
    max_seq: int
    rope_theta: float = 10000.0
    norm_eps: float = 1e-5

    def __post_init__(self):
        for name in ("d_model", "n_layers", "n_heads", "n_kv_heads", "d_ff",
                     "vocab_size", "max_seq", "rope_theta", "norm_eps"):
            if getattr(self, name) <= 0:
                raise FormatError(f"config field {name} must be positive")
        if self.n_heads % self.n_kv_heads != 0:
            raise FormatError("n_heads not divisible by n_kv_heads")
        if self.d_model % self.n_heads != 0:
            raise FormatError("d_model not divisible by n_heads")
        if self.head_dim % 2 != 0:
            raise FormatError("head_dim (d_model / n_heads) must be even for rotary embedding")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def kv_dim(self) -> int:
        return self.n_kv_heads * self.head_dim


def toy_config(**overrides) -> ModelConfig:
    """The small default configuration used by tests and scripts."""
    cfg = ModelConfig(d_model=64, n_layers=4, n_heads=4, n_kv_heads=2,
                      d_ff=172, vocab_size=BYTE_VOCAB_SIZE, max_seq=512)
    return replace(cfg, **overrides) if overrides else cfg


def expected_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every tensor name the forward paths require, with its exact shape.

    Projections are stored [in, out] so activations apply as `x @ W`.
    """
    shapes: dict[str, tuple[int, ...]] = {
        "tok_embedding": (cfg.vocab_size, cfg.d_model),
        "final_norm": (cfg.d_model,),
        "output": (cfg.d_model, cfg.vocab_size),
    }
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        shapes[p + "wq"] = (cfg.d_model, cfg.d_model)
        shapes[p + "wk"] = (cfg.d_model, cfg.kv_dim)
        shapes[p + "wv"] = (cfg.d_model, cfg.kv_dim)
        shapes[p + "wo"] = (cfg.d_model, cfg.d_model)
        shapes[p + "w_gate"] = (cfg.d_model, cfg.d_ff)
        shapes[p + "w_up"] = (cfg.d_model, cfg.d_ff)
        shapes[p + "w_down"] = (cfg.d_ff, cfg.d_model)
        shapes[p + "attn_norm"] = (cfg.d_model,)
        shapes[p + "ffn_norm"] = (cfg.d_model,)
    return shapes


class WeightBundle:
    """Immutable named tensor map driving both forward paths unchanged."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.tensors = {name: np.ascontiguousarray(t, dtype=np.float32)
                        for name, t in tensors.items()}
        for t in self.tensors.values():
            t.setflags(write=False)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise FormatError(f"weight bundle has no tensor named {name!r}") from None

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for name in self.names():
            h.update(name.encode())
            h.update(self.tensors[name].tobytes())
        return h.hexdigest()

    def validate(self, cfg: ModelConfig) -> None:
        expected = expected_shapes(cfg)
        for name, shape in expected.items():
            if name not in self.tensors:
                raise FormatError(f"missing tensor {name!r}")
            got = self.tensors[name].shape
            if got != shape:
                raise ShapeError(f"tensor {name!r} has shape {got}, expected {shape}")


def parse_kv_file(path: str) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.strip() for ln in f]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or lines[0] != MAGIC:
        raise FormatError(f"{path}: missing magic line {MAGIC!r}")
    out: dict[str, str] = {}
    for ln in lines[1:]:
        parts = ln.split(None, 1)
        if len(parts) != 2:
            raise FormatError(f"{path}: malformed line {ln!r}")
        out[parts[0]] = parts[1]
    return out


def load_config(path: str) -> ModelConfig:
    raw = parse_kv_file(path)
    kwargs = {}
    for key, conv in _CONFIG_FIELDS.items():
        if key in raw:
            try:
                kwargs[key] = conv(raw[key])
            except ValueError:
                raise FormatError(f"{path}: field {key} is not a valid {conv.__name__}") from None
        elif key not in ("rope_theta", "norm_eps"):
            raise FormatError(f"{path}: missing required field {key}")
    return ModelConfig(**kwargs)


def save_config(path: str, cfg: ModelConfig) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(MAGIC + "\n")
        for key in _CONFIG_FIELDS:
            f.write(f"{key} {getattr(cfg, key)}\n")


def save_weights(path: str, bundle: WeightBundle) -> None:
    names = bundle.names()
    header_lines = [MAGIC]
    offset = 0
    for name in names:
        t = bundle.tensors[name]
        shape_csv = ",".join(str(d) for d in t.shape)
        nbytes = t.nbytes
        header_lines.append(f"tensor {name} f32 {shape_csv} {offset} {nbytes}")
        offset += nbytes
    header_lines.append("end")
    with open(path, "wb") as f:
        f.write(("\n".join(header_lines) + "\n").encode("ascii"))
        for name in names:
            f.write(bundle.tensors[name].astype("<f4").tobytes())


def load_weights(path: str, cfg: ModelConfig | None = None) -> WeightBundle:
    with open(path, "rb") as f:
        blob = f.read()
    nl = blob.find(b"\n")
    if nl < 0 or blob[:nl].decode("ascii", "replace") != MAGIC:
        raise FormatError(f"{path}: missing magic line {MAGIC!r}")
    entries = []
    pos = nl + 1
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise FormatError(f"{path}: header not terminated by 'end'")
        line = blob[pos:nl].decode("ascii")
        pos = nl + 1
        if line == "end":
            break
        parts = line.split()
        if len(parts) != 6 or parts[0] != "tensor":
            raise FormatError(f"{path}: malformed header line {line!r}")
        _, name, dtype, shape_csv, offset, nbytes = parts
        if dtype != "f32":
            raise FormatError(f"{path}: unsupported dtype {dtype!r} for {name!r}")
        shape = tuple(int(d) for d in shape_csv.split(","))
        entries.append((name, shape, int(offset), int(nbytes)))
    payload = blob[pos:]
    tensors: dict[str, np.ndarray] = {}
    for name, shape, offset, nbytes in entries:
        if offset + nbytes > len(payload):
            raise FormatError(f"{path}: truncated payload for tensor {name!r}")
        flat = np.frombuffer(payload[offset:offset + nbytes], dtype="<f4")
        if flat.size != int(np.prod(shape)):
            raise FormatError(f"{path}: payload size mismatch for tensor {name!r}")
        tensors[name] = flat.reshape(shape).astype(np.float32)
    bundle = WeightBundle(tensors)
    if cfg is not None:
        bundle.validate(cfg)
    return bundle


def init_random_weights(cfg: ModelConfig, seed: int) -> WeightBundle:
    """Seeded random bundle: projections and embeddings at scale 1/sqrt(d_model),
    norm gains at one. Same seed, same bits."""
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(cfg.d_model)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in sorted(expected_shapes(cfg).items()):
        if name.endswith("norm"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            tensors[name] = (rng.standard_normal(shape) * scale).astype(np.float32)
    return WeightBundle(tensors)


class ByteTokenizer:
    """Fixed 259-entry vocabulary: raw byte values plus BOS/EOS/PAD.

    encode/decode round-trip any byte string. BOS is never prepended here;
    that is caller policy.
    """

    vocab_size = BYTE_VOCAB_SIZE
    bos_id = BOS_ID
    eos_id = EOS_ID
    pad_id = PAD_ID

    def encode(self, text: str | bytes) -> list[int]:
        data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
        return list(data)

    def decode(self, ids) -> bytes:
        out = bytearray()
        for i in ids:
            i = int(i)
            if 0 <= i < 256:
                out.append(i)
            elif i in SPECIAL_IDS:
                continue
            else:
                raise FormatError(f"unknown special id {i} in decode")
        return bytes(out)
