"""Pick-and-place task planning over precompiled geometric lookup tables.

The package splits into a generic Functional STRIPS core (``ctmpkit.fstrips``),
a geometric surrogate plus precompilation pipeline (``geometry``, ``tables``),
the instance compiler and validator (``compiler``), width-based search
(``search``), and batch tooling (``bench``, ``figures``, ``cli``).
"""

from .geometry import Scene, TableRect
from .tables import PrecompiledTables, build_tables
from .compiler import (
    CompiledProblem, CtmpInstance, compile_instance, generate_instance,
    validate_plan,
)
from .search import bfws, compute_obstructing_set, iw, iw_driver, make_counters, siw

__version__ = "0.1.0"

__all__ = [
    "Scene", "TableRect", "PrecompiledTables", "build_tables",
    "CompiledProblem", "CtmpInstance", "compile_instance",
    "generate_instance", "validate_plan", "bfws", "compute_obstructing_set",
    "iw", "iw_driver", "make_counters", "siw", "__version__",
]
