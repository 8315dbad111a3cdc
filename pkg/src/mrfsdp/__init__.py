"""Mode and partition-function estimation for k-class Potts models via low-rank unit-vector relaxations."""

from .core import (
    MrfInstance,
    SimplexFrame,
    binary_to_multiclass,
    coupling_strength,
    load_instance,
    objective,
    save_instance,
    simplex_frame,
    symmetrize_and_validate,
)
from .exact import enumerate_exact
from .generate import GenSpec, generate
from .mixing import SolverConfig, solve_m4
from .mixing_plus import solve_m4_plus
from .partition import estimate_z
from .rounding import round_batch

__version__ = "0.1.0"
