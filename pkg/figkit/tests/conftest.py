import math

import pytest


def write_trace(path, n_steps, n_passes, dims=(0, 1, 2, 3), layer=3,
                evolve=True, label="synthetic"):
    """Synthesize a trace file in the documented format.

    evolve=False writes identical values for every pass within a step (the
    base-control pattern); evolve=True perturbs each pass.
    """
    lines = [f"# statestream-trace v1 config={label} "
             f"dims={','.join(str(d) for d in dims)}"]
    for step in range(n_steps):
        for p in range(n_passes):
            vals = []
            for d in dims:
                base = math.sin(0.7 * step + 0.3 * d) * (1 + 0.1 * d)
                if evolve:
                    base += 0.05 * p * math.cos(0.5 * step + d)
                vals.append(repr(base))
            lines.append(f"{step} {p} {layer} {step + 4} " + " ".join(vals))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return str(path)


def write_fc(path, dims, matrix):
    lines = ["# dims " + ",".join(str(d) for d in dims)]
    for row in matrix:
        lines.append(" ".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return str(path)


@pytest.fixture
def base_trace(tmp_path):
    return write_trace(tmp_path / "base.trace", n_steps=12, n_passes=1)


@pytest.fixture
def sst_trace(tmp_path):
    return write_trace(tmp_path / "sst.trace", n_steps=12, n_passes=5,
                       evolve=True)
