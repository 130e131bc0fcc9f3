"""Figure specifications and their config-file format.

Spec files are flat key/value lines; `input` may repeat. Example:

    kind timeseries
    input runs/base.trace
    input runs/sst.trace
    dims 0,1,2,3
    output figs/states.png
    ymin -4
    ymax 4

Display bounds (ymin/ymax for timeseries, vmin/vmax for fc-grid) are shared
across every input so side-by-side comparisons are honest; when omitted
they are computed jointly over all inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .files import FileFormatError

KINDS = ("timeseries", "fc-grid")


@dataclass
class FigureSpec:
    kind: str
    inputs: list[str]
    output: str
    dims: list[int] = field(default_factory=list)
    ymin: float | None = None
    ymax: float | None = None
    vmin: float = -1.0
    vmax: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FileFormatError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.inputs:
            raise FileFormatError("at least one input path is required")
        if not self.output:
            raise FileFormatError("output path is required")
        if (self.ymin is None) != (self.ymax is None):
            raise FileFormatError("ymin and ymax must be given together")


def load_spec(path: str) -> FigureSpec:
    inputs: list[str] = []
    fields: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise FileFormatError(f"{path}: malformed line {line!r}")
            key, value = parts
            if key == "input":
                inputs.append(value)
            else:
                fields[key] = value
    kwargs = {}
    if "dims" in fields:
        kwargs["dims"] = [int(t) for t in fields["dims"].split(",")]
    for key in ("ymin", "ymax", "vmin", "vmax"):
        if key in fields:
            kwargs[key] = float(fields[key])
    return FigureSpec(kind=fields.get("kind", ""), inputs=inputs,
                      output=fields.get("output", ""), **kwargs)
