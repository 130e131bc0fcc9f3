"""Latent-state tracing and analysis.

A TraceSink records per-layer, per-pass block-output states (raw values, a
configurable dimension subset) during generation. Analyses on top of it:
per-key trace comparison and functional-connectivity style correlation
matrices across recursion passes.

Trace file format: one header line
`# statestream-trace v1 config=<hash> dims=<i,...>` followed by one line
per event, `step pass layer position v0 v1 ...`, floats printed in
shortest round-trip form. FC matrix files: `# dims <i,...>` then one text
row per matrix row.

The FC matrix for (step, pass) is the Pearson correlation between recorded
dimensions, sampled over the trailing window of token steps at that same
pass index (final recorded layer). Sampling at fixed pass index keeps the
base-path control exactly constant across passes. Dimensions with zero
variance in the window correlate 0 off-diagonal (diagonal stays 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError


def default_dim_subset(d: int, n_leading: int = 16, n_spread: int = 16) -> list[int]:
    """First n_leading dimensions plus n_spread evenly spaced ones."""
    leading = list(range(min(n_leading, d)))
    spread = np.unique(np.linspace(0, d - 1, num=min(n_spread, d), dtype=int)).tolist()
    return sorted(set(leading) | set(spread))


@dataclass(frozen=True)
class TraceEvent:
    step: int
    pass_idx: int
    layer: int
    position: int
    values: np.ndarray


class TraceSink:
    """Append-only recorder of sampled state rows."""

    def __init__(self, dim_subset: list[int], config_label: str = ""):
        if not dim_subset:
            raise ShapeError("dim_subset must not be empty")
        self.dim_subset = list(dim_subset)
        self.config_label = config_label
        self.events: list[TraceEvent] = []
        self._last_key: tuple[int, int, int] | None = None

    def record(self, step: int, pass_idx: int, layer: int, position: int,
               state_row: np.ndarray) -> None:
        key = (step, pass_idx, layer)
        if self._last_key is not None and key <= self._last_key:
            raise ShapeError(f"trace keys must increase: {key} after {self._last_key}")
        self._last_key = key
        values = np.asarray(state_row, dtype=np.float32)[self.dim_subset].copy()
        self.events.append(TraceEvent(step, pass_idx, layer, position, values))


def export_trace(sink: TraceSink, path: str) -> None:
    with open(path, "w", encoding="ascii") as f:
        dims = ",".join(str(i) for i in sink.dim_subset)
        f.write(f"# statestream-trace v1 config={sink.config_label} dims={dims}\n")
        for ev in sink.events:
            vals = " ".join(repr(float(v)) for v in ev.values)
            f.write(f"{ev.step} {ev.pass_idx} {ev.layer} {ev.position} {vals}\n")


def load_trace(path: str) -> TraceSink:
    with open(path, "r", encoding="ascii") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("# statestream-trace v1 "):
        raise FormatError(f"{path}: not a statestream trace file")
    header = dict(part.split("=", 1) for part in lines[0].split()[3:])
    dims = [int(t) for t in header["dims"].split(",")]
    sink = TraceSink(dims, config_label=header.get("config", ""))
    for ln in lines[1:]:
        if not ln:
            continue
        parts = ln.split()
        step, pass_idx, layer, position = (int(p) for p in parts[:4])
        values = np.array([float(p) for p in parts[4:]], dtype=np.float32)
        if values.shape[0] != len(dims):
            raise FormatError(f"{path}: event value count does not match dims header")
        sink.events.append(TraceEvent(step, pass_idx, layer, position, values))
    return sink


def event_map(events) -> dict[tuple[int, int, int, int], np.ndarray]:
    return {(e.step, e.pass_idx, e.layer, e.position): e.values for e in events}


def pass_slice(events, pass_idx: int) -> dict[tuple[int, int, int], np.ndarray]:
    """Events at one pass index, re-keyed (step, layer, position)."""
    return {(e.step, e.layer, e.position): e.values
            for e in events if e.pass_idx == pass_idx}


@dataclass
class CompareReport:
    per_key: dict
    overall_max: float
    missing_a: list
    missing_b: list

    @property
    def identical(self) -> bool:
        return self.overall_max == 0.0 and not self.missing_a and not self.missing_b


def compare_traces(a: dict, b: dict) -> CompareReport:
    """Per-key max absolute difference between two keyed value maps.

    Keys present on only one side are reported, not fatal. overall_max of
    exactly 0.0 means every shared key is bit-identical in value.
    """
    shared = sorted(set(a) & set(b))
    per_key = {}
    overall = 0.0
    for key in shared:
        diff = float(np.max(np.abs(a[key].astype(np.float64) - b[key].astype(np.float64)))) \
            if a[key].size else 0.0
        per_key[key] = diff
        overall = max(overall, diff)
    return CompareReport(per_key=per_key, overall_max=overall,
                         missing_a=sorted(set(b) - set(a)),
                         missing_b=sorted(set(a) - set(b)))


@dataclass(frozen=True)
class FCMatrix:
    dims: list[int]
    matrix: np.ndarray

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != len(self.dims):
            raise ShapeError(f"FC matrix shape {m.shape} does not match dims")


def _pearson(samples: np.ndarray) -> np.ndarray:
    # samples: [n_obs, n_dims]; zero-variance dims -> 0 off-diagonal, 1 diagonal
    x = samples.astype(np.float64)
    x = x - x.mean(axis=0, keepdims=True)
    std = x.std(axis=0)
    n_dims = x.shape[1]
    out = np.zeros((n_dims, n_dims), dtype=np.float64)
    ok = std > 0.0
    if ok.any():
        xn = np.where(ok[None, :], x / np.where(ok, std, 1.0)[None, :], 0.0)
        out = (xn.T @ xn) / x.shape[0]
        out = np.clip(out, -1.0, 1.0)
        out[~ok, :] = 0.0
        out[:, ~ok] = 0.0
    np.fill_diagonal(out, 1.0)
    return out


def fc_matrix(sink: TraceSink, step: int, pass_idx: int, window_steps: int = 16,
              layer: int | None = None) -> FCMatrix:
    """Correlation between recorded dimensions over trailing token steps.

    Samples are the recorded state rows at `pass_idx` for steps in
    (step - window_steps, step], at `layer` (default: the last layer present
    in the trace). Needs at least two sampled steps.
    """
    if layer is None:
        layers = [e.layer for e in sink.events]
        if not layers:
            raise ShapeError("empty trace")
        layer = max(layers)
    lo = step - window_steps
    rows = [e.values for e in sink.events
            if e.layer == layer and e.pass_idx == pass_idx and lo < e.step <= step]
    if len(rows) < 2:
        raise ShapeError(f"fc_matrix window has {len(rows)} samples, needs >= 2")
    return FCMatrix(dims=list(sink.dim_subset), matrix=_pearson(np.stack(rows)))


def export_fc(fc: FCMatrix, path: str) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write("# dims " + ",".join(str(i) for i in fc.dims) + "\n")
        for row in fc.matrix:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_fc(path: str) -> FCMatrix:
    with open(path, "r", encoding="ascii") as f:
        lines = [ln for ln in f.read().splitlines() if ln]
    if not lines or not lines[0].startswith("# dims "):
        raise FormatError(f"{path}: not an FC matrix file")
    dims = [int(t) for t in lines[0][len("# dims "):].split(",")]
    rows = [np.array([float(v) for v in ln.split()]) for ln in lines[1:]]
    matrix = np.stack(rows) if rows else np.zeros((0, 0))
    if matrix.shape[0] != matrix.shape[1]:
        raise FormatError(f"{path}: FC matrix is not square")
    return FCMatrix(dims=dims, matrix=matrix)
