"""Figure rendering for statestream trace and FC matrix text files."""

from .files import FCMatrix, FileFormatError, Trace, TraceEvent, load_fc, load_trace
from .render import fc_panel_pixels, render, render_fc_grid, render_timeseries
from .spec import FigureSpec, load_spec

__version__ = "0.1.0"
