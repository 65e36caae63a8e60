"""Static figure rendering for the lattice verification suite's CSV outputs."""

__version__ = "0.1.0"

from .render import FigureSpec, RenderResult, render  # noqa: F401
