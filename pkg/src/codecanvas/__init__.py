"""codecanvas: an execution engine for two-dimensional code canvases.

Cells live anywhere on an infinite plane, outputs attach below their cell
until detached and frozen, and rectangular environment regions own private
interpreter sessions forked from the canvas's main runtime. Canvases persist
as ``.2dntb`` files and convert to and from Jupyter notebooks.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    MAIN,
    Canvas,
    Cell,
    Environment,
    OutputCell,
    OutputItem,
    Point,
    Rect,
)
