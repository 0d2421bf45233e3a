"""Figure rendering for bip harness CSV outputs."""

from .render import PlotError, PlotSpec, render

__all__ = ["PlotError", "PlotSpec", "render"]
__version__ = "0.1.0"
