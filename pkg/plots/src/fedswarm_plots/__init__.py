"""Non-interactive figure regeneration for fedswarm experiment summaries."""

__version__ = "0.1.0"

from fedswarm_plots.render import FigureSpec, SchemaMismatch, build_figure, render  # noqa: F401
