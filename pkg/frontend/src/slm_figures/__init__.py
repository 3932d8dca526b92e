"""Figure rendering for slmlab CSV artifacts.

This package is read-only over the experiment outputs: every number in
a figure originates from the CSV files; the only transformations here
are axis scales.
"""

__version__ = "0.1.0"

from .render import FigureSpec, render

__all__ = ["FigureSpec", "render"]
