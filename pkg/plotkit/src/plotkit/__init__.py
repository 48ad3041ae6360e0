"""CSV-to-figure rendering for decentralized optimization experiments."""

from .render import KINDS, FigureSpec, SchemaError, build_figure, render

__version__ = "0.1.0"
