"""Matplotlib rendering for trace time series and FC heatmap grids.

Rendering is read-only over inputs and deterministic: fixed styling, fixed
dpi, no timestamps in the output, so re-rendering identical inputs yields
byte-identical images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .files import FCMatrix, FileFormatError, Trace, load_fc, load_trace  # noqa: E402
from .spec import FigureSpec  # noqa: E402

DPI = 100
SAVE_KW = dict(dpi=DPI, metadata={"Software": "figkit"})


def _joint_bounds(traces: list[Trace], dims: list[int]) -> tuple[float, float]:
    lo, hi = np.inf, -np.inf
    for tr in traces:
        for dim in dims:
            _, ys = tr.series(dim)
            if ys.size:
                lo = min(lo, float(ys.min()))
                hi = max(hi, float(ys.max()))
    if not np.isfinite([lo, hi]).all():
        raise FileFormatError("no data points to determine display bounds")
    pad = 0.05 * (hi - lo or 1.0)
    return lo - pad, hi + pad


def render_timeseries(spec: FigureSpec) -> str:
    """One subplot row per dimension, one column per input trace.

    Vertical lines mark token boundaries; with extra recursion passes the
    intermediate per-pass points are visible between them. All columns share
    the same y bounds.
    """
    traces = [load_trace(p) for p in spec.inputs]
    dims = spec.dims or traces[0].dims[:4]
    for tr, path in zip(traces, spec.inputs):
        missing = [d for d in dims if d not in tr.dims]
        if missing:
            raise FileFormatError(f"{path}: dimensions {missing} not recorded")
    if spec.ymin is not None:
        bounds = (spec.ymin, spec.ymax)
    else:
        bounds = _joint_bounds(traces, dims)

    n_rows, n_cols = len(dims), len(traces)
    fig, axes = plt.subplots(n_rows, n_cols,
                             figsize=(4.0 * n_cols, 1.4 * n_rows),
                             squeeze=False, sharex="col")
    for col, (tr, path) in enumerate(zip(traces, spec.inputs)):
        n_steps = 1 + max((e.step for e in tr.events), default=0)
        for row, dim in enumerate(dims):
            ax = axes[row][col]
            xs, ys = tr.series(dim)
            for boundary in range(n_steps + 1):
                ax.axvline(boundary, color="0.85", linewidth=0.5, zorder=0)
            ax.plot(xs, ys, marker=".", markersize=2.5, linewidth=0.6,
                    color="tab:blue")
            ax.set_ylim(*bounds)
            ax.set_ylabel(f"d{dim}", fontsize=7)
            ax.tick_params(labelsize=6)
            if row == 0:
                ax.set_title(f"{path} ({tr.n_passes} pass/token)", fontsize=8)
            if row == n_rows - 1:
                ax.set_xlabel("token step", fontsize=7)
    fig.tight_layout()
    fig.savefig(spec.output, **SAVE_KW)
    plt.close(fig)
    return spec.output


def _draw_fc_panel(ax, fc: FCMatrix, vmin: float, vmax: float, title: str):
    ax.imshow(fc.matrix, vmin=vmin, vmax=vmax, cmap="RdBu_r",
              interpolation="nearest")
    ticks = list(range(len(fc.dims)))
    step = max(1, len(ticks) // 8)
    ax.set_xticks(ticks[::step])
    ax.set_xticklabels([str(fc.dims[i]) for i in ticks[::step]], fontsize=5,
                       rotation=90)
    ax.set_yticks(ticks[::step])
    ax.set_yticklabels([str(fc.dims[i]) for i in ticks[::step]], fontsize=5)
    ax.set_title(title, fontsize=8)


def render_fc_grid(spec: FigureSpec) -> str:
    """One heatmap panel per input FC matrix file, shared color scale."""
    mats = [load_fc(p) for p in spec.inputs]
    n = len(mats)
    fig, axes = plt.subplots(1, n, figsize=(2.6 * n, 2.9), squeeze=False)
    for i, (fc, path) in enumerate(zip(mats, spec.inputs)):
        _draw_fc_panel(axes[0][i], fc, spec.vmin, spec.vmax, title=path.split("/")[-1])
    fig.tight_layout()
    fig.savefig(spec.output, **SAVE_KW)
    plt.close(fig)
    return spec.output


def fc_panel_pixels(path: str, vmin: float = -1.0, vmax: float = 1.0) -> np.ndarray:
    """RGBA pixel array of a single FC panel, rendered exactly as the grid
    renders it. Lets callers compare panels at the pixel level."""
    fc = load_fc(path)
    fig, ax = plt.subplots(figsize=(2.6, 2.9))
    _draw_fc_panel(ax, fc, vmin, vmax, title="panel")
    fig.tight_layout()
    fig.canvas.draw()
    buf = np.asarray(fig.canvas.buffer_rgba()).copy()
    plt.close(fig)
    return buf


def render(spec: FigureSpec) -> str:
    if spec.kind == "timeseries":
        return render_timeseries(spec)
    return render_fc_grid(spec)
