"""Projected SOR for the discrete thin obstacle problem, with certified residuals."""

from __future__ import annotations

import itertools
import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from ._psor_py import MulticolourSweeper
from .assembly import LCPSystem
from .grid import Grid, GridFunction, interpolate_many

log = logging.getLogger(__name__)

try:
    if os.environ.get("THINOBS_PURE"):
        raise ImportError("pure backend forced")
    from ._psor import psor_sweeps as _cy_sweeps

    BACKEND = "cython"
except ImportError:
    _cy_sweeps = None
    BACKEND = "numpy"


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    omega: float = 1.5
    max_sweeps: int = 200_000
    tol_c: float = 1e-10
    tol_r: float = 1e-10
    check_every: int = 25
    record_energy: bool = False
    backend: Optional[str] = None

    def __post_init__(self):
        if not 0.0 < self.omega < 2.0:
            raise ValueError(f"relaxation factor omega must lie in (0, 2), got {self.omega}")
        if not (self.tol_c > 0 and self.tol_r > 0):
            raise ValueError("solver tolerances must be positive")
        if self.max_sweeps < 1 or self.check_every < 1:
            raise ValueError("max_sweeps and check_every must be positive")
        if self.backend not in (None, "cython", "numpy"):
            raise ValueError(f"unknown backend {self.backend!r}")


def optimal_omega(grid: Grid) -> float:
    """SOR-optimal relaxation for the Laplacian on ``grid``."""
    rho_jacobi = np.cos(np.pi / (grid.m - 1))
    return float(2.0 / (1.0 + np.sqrt(1.0 - rho_jacobi**2)))


@dataclass(frozen=True)
class SolveReport:
    sweeps: int
    converged: bool
    complementarity: float
    dual_residual: float
    linear_residual: float
    energy: float
    active_set: np.ndarray
    tol_c: float
    tol_r: float
    backend: str
    energy_history: np.ndarray = field(default_factory=lambda: np.zeros(0))


class _Sweeper:
    def __init__(self, A: sp.csr_matrix, backend: str):
        self.backend = backend
        if backend == "cython":
            if _cy_sweeps is None:
                raise SolverError("compiled PSOR kernel is not available")
            self.diag = np.ascontiguousarray(A.diagonal(), dtype=float)
            off = sp.csr_matrix(A - sp.diags(self.diag))
            off.eliminate_zeros()
            off.sort_indices()
            self.indptr = np.ascontiguousarray(off.indptr, dtype=np.intc)
            self.indices = np.ascontiguousarray(off.indices, dtype=np.intc)
            self.data = np.ascontiguousarray(off.data, dtype=float)
        else:
            self.impl = MulticolourSweeper(A)

    def __call__(self, u, b, lower, omega, nsweeps):
        if self.backend == "cython":
            _cy_sweeps(self.indptr, self.indices, self.data, self.diag, b, lower, u, omega, nsweeps)
        else:
            self.impl(u, b, lower, omega, nsweeps)


def residuals(sys: LCPSystem, u: np.ndarray) -> tuple[float, float, float]:
    """``(complementarity, dual violation on K, linear residual off K)`` recomputed from ``u``."""
    r = sys.A @ u - sys.b
    free = np.ones(sys.size, dtype=bool)
    free[sys.constrained] = False
    lin = float(np.max(np.abs(r[free]), initial=0.0))
    rk = r[sys.constrained]
    gap = u[sys.constrained] - sys.psi
    if np.any(gap < 0):
        raise SolverError("iterate violates the obstacle")
    dual = float(max(0.0, -np.min(rk, initial=0.0)))
    comp = float(np.max(np.abs(gap * rk), initial=0.0))
    return comp, dual, lin


def energy(sys: LCPSystem, u) -> float:
    u = sys.from_field(u)
    return float(0.5 * u @ (sys.A @ u) - sys.b @ u)


def contact_set(sys: LCPSystem, u, tol: float = 0.0) -> np.ndarray:
    """Constrained nodes with ``u - psi <= tol`` (flat grid indices when the system has a grid)."""
    u = sys.from_field(u)
    hit = u[sys.constrained] - sys.psi <= tol
    return sys.constrained_nodes()[hit]


def psor_solve(
    sys: LCPSystem,
    cfg: SolverConfig = SolverConfig(),
    u0: Union[GridFunction, np.ndarray, None] = None,
) -> tuple[Union[GridFunction, np.ndarray], SolveReport]:
    """Projected SOR until the recomputed residuals meet the tolerances.

    Returns a :class:`GridFunction` when the system carries a grid, the vector of
    unknowns otherwise.  Non-convergence is reported through
    ``report.converged`` with the last iterate.
    """
    A = sys.A
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("operator has a non-positive diagonal entry; not SPD")
    backend = cfg.backend or BACKEND
    sweeper = _Sweeper(A, backend)
    lower = sys.lower_bounds()
    u = np.zeros(sys.size) if u0 is None else sys.from_field(u0).copy()
    u = np.maximum(u, lower)
    scale = max(1.0, float(np.max(np.abs(sys.b), initial=0.0)))
    tol_c, tol_r = cfg.tol_c * scale, cfg.tol_r * scale

    history = [energy(sys, u)] if cfg.record_energy else []
    sweeps = 0
    converged = False
    comp, dual, lin = residuals(sys, u)
    while sweeps < cfg.max_sweeps:
        if comp <= tol_c and dual <= tol_c and lin <= tol_r:
            converged = True
            break
        batch = min(cfg.check_every, cfg.max_sweeps - sweeps)
        if cfg.record_energy:
            for _ in range(batch):
                sweeper(u, sys.b, lower, cfg.omega, 1)
                history.append(energy(sys, u))
        else:
            sweeper(u, sys.b, lower, cfg.omega, batch)
        sweeps += batch
        comp, dual, lin = residuals(sys, u)
    else:
        converged = comp <= tol_c and dual <= tol_c and lin <= tol_r
    if not converged:
        log.warning("PSOR stopped after %d sweeps: comp=%.3g dual=%.3g lin=%.3g", sweeps, comp, dual, lin)

    report = SolveReport(
        sweeps=sweeps,
        converged=converged,
        complementarity=comp,
        dual_residual=dual,
        linear_residual=lin,
        energy=energy(sys, u),
        active_set=contact_set(sys, u),
        tol_c=tol_c,
        tol_r=tol_r,
        backend=backend,
        energy_history=np.asarray(history),
    )
    if sys.grid is not None:
        return sys.to_field(u), report
    return u, report


def prolongate(u: GridFunction, grid: Grid) -> GridFunction:
    """Multilinear transfer of ``u`` onto a (finer) grid over the same box."""
    return GridFunction(grid, interpolate_many(u, grid.points()))


def lcp_by_enumeration(sys: LCPSystem, tol: float = 1e-10) -> np.ndarray:
    """Exhaustive active-set solve for small ``|K|``; independent of PSOR.

    For every subset ``S`` of K, fix ``u_S = psi_S``, solve the remaining
    equations densely and keep the first feasible complementary candidate.
    """
    k = sys.constrained.size
    if k > 16:
        raise ValueError("enumeration is limited to |K| <= 16")
    A = sys.A.toarray()
    b = sys.b
    n = sys.size
    for size in range(k + 1):
        for subset in itertools.combinations(range(k), size):
            fixed = sys.constrained[list(subset)]
            free = np.setdiff1d(np.arange(n), fixed)
            u = np.zeros(n)
            u[fixed] = sys.psi[list(subset)]
            rhs = b[free] - A[np.ix_(free, fixed)] @ u[fixed]
            u[free] = np.linalg.solve(A[np.ix_(free, free)], rhs)
            r = A @ u - b
            if np.any(u[sys.constrained] < sys.psi - tol):
                continue
            if np.any(r[fixed] < -tol * max(1.0, np.abs(b).max(initial=0.0))):
                continue
            return u
    raise SolverError("no complementary active set found")
