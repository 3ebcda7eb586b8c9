"""Publication figure renderer for steady-state optical-pumping sweep files.

A pure consumer of the simulation driver's persisted outputs (results CSV
and far-field grid text). Contains no physics; it validates the embedded
run metadata against each figure's parameter point and arranges the numbers
on the documented axes.
"""

__version__ = "0.1.0"

from .data import FarFieldMap, InputError, SweepRow, read_map, read_rows
from .figures import FIGURES, FigureSpec, render

__all__ = [
    "__version__",
    "FIGURES",
    "FarFieldMap",
    "FigureSpec",
    "InputError",
    "SweepRow",
    "read_map",
    "read_rows",
    "render",
]
