"""Figure rendering for sparse phase retrieval benchmark CSVs."""

from .render import FigureKind, FigureSpec, SchemaError, render

__all__ = ["FigureKind", "FigureSpec", "SchemaError", "render"]
__version__ = "0.1.0"
