"""Acceptance: time-series point structure, FC grid pass behavior, and
byte-stable re-rendering. Run with `pytest -v -s`."""

from contextlib import contextmanager

import numpy as np

from figkit.files import load_trace
from figkit.render import fc_panel_pixels, render_fc_grid, render_timeseries
from figkit.spec import FigureSpec

from conftest import write_fc, write_trace


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def test_figure_kit_acceptance(tmp_path):
    with criterion("figure-kit"):
        base_path = write_trace(tmp_path / "base.trace", n_steps=10, n_passes=1)
        sst_path = write_trace(tmp_path / "sst.trace", n_steps=10, n_passes=5,
                               evolve=True)

        base, sst = load_trace(base_path), load_trace(sst_path)
        assert len(base.series(0)[0]) == 10      # one point per token
        assert len(sst.series(0)[0]) == 10 * 5   # five points per token

        out_a = tmp_path / "ts_a.png"
        out_b = tmp_path / "ts_b.png"
        for out in (out_a, out_b):
            render_timeseries(FigureSpec(kind="timeseries",
                                         inputs=[base_path, sst_path],
                                         output=str(out), dims=[0, 1, 2, 3]))
        assert out_a.read_bytes() == out_b.read_bytes()  # byte-stable

        rng = np.random.default_rng(11)
        m = rng.uniform(-1, 1, size=(6, 6))
        m = np.clip((m + m.T) / 2, -1, 1)
        np.fill_diagonal(m, 1.0)
        base_panels, sst_panels = [], []
        for p in range(5):
            base_panels.append(write_fc(tmp_path / f"base_pass{p}.fc",
                                        list(range(6)), m))
            drift = np.clip(m + 0.08 * p * np.eye(6)[::-1], -1, 1)
            np.fill_diagonal(drift, 1.0)
            sst_panels.append(write_fc(tmp_path / f"sst_pass{p}.fc",
                                       list(range(6)), drift))

        grid_a = tmp_path / "grid_a.png"
        grid_b = tmp_path / "grid_b.png"
        for out in (grid_a, grid_b):
            render_fc_grid(FigureSpec(kind="fc-grid",
                                      inputs=base_panels + sst_panels,
                                      output=str(out)))
        assert grid_a.read_bytes() == grid_b.read_bytes()  # byte-stable

        base_pixels = {fc_panel_pixels(p).tobytes() for p in base_panels}
        assert len(base_pixels) == 1              # pixel-identical across passes
        sst_pixels = {fc_panel_pixels(p).tobytes() for p in sst_panels}
        assert len(sst_pixels) == 5               # panels differ
