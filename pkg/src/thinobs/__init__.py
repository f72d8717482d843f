"""Thin obstacle (Signorini) problem laboratory.

Finite-difference assembly of the variable-coefficient thin obstacle problem,
a projected SOR solver and the frequency / blow-up diagnostics used to measure
the optimal ``C^{1,1/2}`` growth at free boundary points.
"""

from .grid import Grid, GridFunction, build_grid
from .solver import BACKEND, SolverConfig, psor_solve

__all__ = ["BACKEND", "Grid", "GridFunction", "SolverConfig", "build_grid", "psor_solve"]
__version__ = "0.1.0"
