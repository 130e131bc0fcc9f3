"""Parsers for the two text formats this tool consumes.

Trace files: `# statestream-trace v1 config=<label> dims=<i,...>` header,
then one `step pass layer position v0 v1 ...` line per event.

FC matrix files: `# dims <i,...>` header, then one whitespace-separated
text row per matrix row (square, symmetric, values in [-1, 1]).

Deliberately standalone: no dependency on the engine that writes them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FileFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TraceEvent:
    step: int
    pass_idx: int
    layer: int
    position: int
    values: np.ndarray


@dataclass
class Trace:
    dims: list[int]
    config_label: str
    events: list[TraceEvent]

    @property
    def n_passes(self) -> int:
        return 1 + max((e.pass_idx for e in self.events), default=0)

    @property
    def final_layer(self) -> int:
        return max((e.layer for e in self.events), default=0)

    def series(self, dim: int, layer: int | None = None):
        """(x, y) arrays for one dimension: x = step + pass/n_passes.

        One point per recorded pass, so r extra passes show as r
        intermediate points between token boundaries.
        """
        if dim not in self.dims:
            raise FileFormatError(f"dimension {dim} not recorded (have {self.dims})")
        layer = self.final_layer if layer is None else layer
        col = self.dims.index(dim)
        n = self.n_passes
        xs, ys = [], []
        for e in self.events:
            if e.layer != layer:
                continue
            xs.append(e.step + e.pass_idx / n)
            ys.append(float(e.values[col]))
        return np.array(xs), np.array(ys)


def load_trace(path: str) -> Trace:
    with open(path, "r", encoding="ascii") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("# statestream-trace v1 "):
        raise FileFormatError(f"{path}: not a statestream trace file")
    header = dict(part.split("=", 1) for part in lines[0].split()[3:])
    dims = [int(t) for t in header["dims"].split(",")]
    events = []
    for ln in lines[1:]:
        if not ln:
            continue
        parts = ln.split()
        if len(parts) != 4 + len(dims):
            raise FileFormatError(f"{path}: bad event line {ln!r}")
        step, pass_idx, layer, position = (int(p) for p in parts[:4])
        values = np.array([float(v) for v in parts[4:]])
        events.append(TraceEvent(step, pass_idx, layer, position, values))
    return Trace(dims=dims, config_label=header.get("config", ""), events=events)


@dataclass
class FCMatrix:
    dims: list[int]
    matrix: np.ndarray


def load_fc(path: str) -> FCMatrix:
    with open(path, "r", encoding="ascii") as f:
        lines = [ln for ln in f.read().splitlines() if ln]
    if not lines or not lines[0].startswith("# dims "):
        raise FileFormatError(f"{path}: not an FC matrix file")
    dims = [int(t) for t in lines[0][len("# dims "):].split(",")]
    rows = [np.array([float(v) for v in ln.split()]) for ln in lines[1:]]
    matrix = np.stack(rows) if rows else np.zeros((0, 0))
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise FileFormatError(f"{path}: FC matrix is not square")
    if matrix.shape[0] != len(dims):
        raise FileFormatError(f"{path}: dims header does not match matrix size")
    return FCMatrix(dims=dims, matrix=matrix)
