"""Discrete energy minimization for the thin obstacle problem.

The operator is the finite-difference form of ``-div(a grad u)`` obtained as
the Hessian of a discrete Dirichlet energy, so symmetry holds by construction:

* diagonal coefficients ``a_kk`` live on edge midpoints (flux form);
* mixed coefficients ``a_ij`` live on cell centres of the ``(i, j)`` plane and
  couple the two cell diagonals.

Unknowns are node values on the box ``[-L, L]^n``; the box boundary carries
Dirichlet data and is eliminated into the right-hand side.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, GridFunction, ThinManifold, manifold_constrained_nodes

log = logging.getLogger(__name__)

Field = Callable[[np.ndarray], np.ndarray]


class AssemblyError(ValueError):
    pass


class EllipticityError(AssemblyError):
    pass


@dataclass(frozen=True)
class EllipticCoefficients:
    """Symmetric matrix field ``a(x)``; ``matrix`` maps ``(..., n)`` to ``(..., n, n)``."""

    matrix: Callable[[np.ndarray], np.ndarray]
    lam: float = 0.5
    Lam: float = 2.0
    gamma: float = 1.0
    name: str = "a"

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.matrix(np.asarray(x, dtype=float)), dtype=float)

    def at_origin(self, n: int) -> np.ndarray:
        return self(np.zeros((1, n)))[0]

    def check(self, x: np.ndarray) -> None:
        """Symmetry and ``lam |xi|^2 <= (a xi, xi) <= Lam |xi|^2`` at the points ``x``."""
        a = self(x)
        if not np.allclose(a, np.swapaxes(a, -1, -2), rtol=0, atol=1e-12):
            raise EllipticityError(f"coefficient field {self.name} is not symmetric")
        eig = np.linalg.eigvalsh(a)
        if eig.min() < self.lam - 1e-12 or eig.max() > self.Lam + 1e-12:
            raise EllipticityError(
                f"coefficient field {self.name} violates ellipticity bounds "
                f"[{self.lam}, {self.Lam}]: sampled eigenvalues in [{eig.min():.4g}, {eig.max():.4g}]"
            )


def identity_coefficients(n: int) -> EllipticCoefficients:
    eye = np.eye(n)
    return EllipticCoefficients(
        lambda x: np.broadcast_to(eye, np.shape(x)[:-1] + (n, n)).copy(),
        lam=1.0,
        Lam=1.0,
        name="identity",
    )


def constant_coefficients(a0) -> EllipticCoefficients:
    a0 = np.asarray(a0, dtype=float)
    eig = np.linalg.eigvalsh(a0)
    return EllipticCoefficients(
        lambda x: np.broadcast_to(a0, np.shape(x)[:-1] + a0.shape).copy(),
        lam=float(eig.min()),
        Lam=float(eig.max()),
        name="constant",
    )


def sine_perturbed_coefficients(n: int, eps: float = 0.1, mixed: float = 0.0) -> EllipticCoefficients:
    """``a = I + eps * diag(sin(x_1) sin(x_2) ...)`` plus optional mixed term; ``a(0) = I``.

    Each diagonal entry ``a_kk = 1 + eps * sin(x_k) * sin(x_{k+1})`` (cyclic) so
    the perturbation vanishes to second order at the origin.  ``mixed`` adds
    ``mixed * sin(x_1 + x_n)`` to the ``(1, n)`` entry.
    """

    def matrix(x):
        x = np.asarray(x, dtype=float)
        a = np.zeros(x.shape[:-1] + (n, n))
        for k in range(n):
            nxt = x[..., (k + 1) % n] if n > 1 else x[..., k]
            a[..., k, k] = 1.0 + eps * np.sin(x[..., k]) * np.sin(nxt)
        if mixed and n > 1:
            off = mixed * np.sin(x[..., 0] + x[..., n - 1])
            a[..., 0, n - 1] = off
            a[..., n - 1, 0] = off
        return a

    bound = abs(eps) + abs(mixed)
    return EllipticCoefficients(matrix, lam=1.0 - bound, Lam=1.0 + bound, name=f"sine({eps:g},{mixed:g})")


@dataclass(frozen=True)
class ProblemSpec:
    """Data of the thin obstacle problem on a grid.

    ``obstacle`` is evaluated at manifold foot points, ``dirichlet`` and
    ``source`` at nodes.  ``shift`` is a node field already subtracted from the
    unknown: the discrete obstacle at node ``k`` is ``obstacle(foot_k) - shift_k``
    and the boundary values are ``dirichlet - shift``.
    """

    grid: Grid
    coefficients: EllipticCoefficients
    manifold: ThinManifold
    obstacle: Field
    dirichlet: Field
    source: Optional[Field] = None
    shift: Optional[np.ndarray] = None

    def source_values(self) -> np.ndarray:
        if self.source is None:
            return np.zeros(self.grid.size)
        return np.asarray(self.source(self.grid.points()), dtype=float).reshape(-1)

    def dirichlet_values(self) -> np.ndarray:
        g = np.asarray(self.dirichlet(self.grid.points()), dtype=float).reshape(-1)
        return g if self.shift is None else g - self.shift


def _node_ids(grid: Grid) -> np.ndarray:
    return np.arange(grid.size).reshape(grid.shape)


def assemble_operator(spec: ProblemSpec, check: bool = True) -> sp.csr_matrix:
    """Full ``m^n x m^n`` symmetric operator for ``-div(a grad .)``.

    Rows of interior nodes are the finite-difference stencil; boundary rows
    carry only the edges/cells inside the box and are discarded by Dirichlet
    elimination.
    """
    grid = spec.grid
    n, h = grid.n, grid.h
    ids = _node_ids(grid)
    coords = grid.coords()
    coef = spec.coefficients
    if check:
        coef.check(grid.points())
    rows, cols, vals = [], [], []

    def couple(p, q, c):
        # energy term c/2 * (u_p - u_q)^2
        rows.extend([p, q, p, q])
        cols.extend([p, q, q, p])
        vals.extend([c, c, -c, -c])

    for k in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[k] = slice(0, -1)
        hi[k] = slice(1, None)
        p = ids[tuple(lo)].ravel()
        q = ids[tuple(hi)].ravel()
        mid = 0.5 * (coords[tuple(lo)] + coords[tuple(hi)]).reshape(-1, n)
        c = coef(mid)[:, k, k] / h**2
        couple(p, q, c)

    for i in range(n):
        for j in range(i + 1, n):
            s00 = [slice(None)] * n
            s00[i] = slice(0, -1)
            s00[j] = slice(0, -1)
            s11 = list(s00)
            s11[i] = slice(1, None)
            s11[j] = slice(1, None)
            s10 = list(s00)
            s10[i] = slice(1, None)
            s01 = list(s00)
            s01[j] = slice(1, None)
            p00, p11 = ids[tuple(s00)].ravel(), ids[tuple(s11)].ravel()
            p10, p01 = ids[tuple(s10)].ravel(), ids[tuple(s01)].ravel()
            centre = 0.5 * (coords[tuple(s00)] + coords[tuple(s11)]).reshape(-1, n)
            a = coef(centre)[:, i, j]
            if not np.any(a):
                continue
            # a di u dj u = |a|/2 [(di u +- dj u)^2 - (di u)^2 - (dj u)^2], the diagonal
            # picked by sign(a); keeps off-diagonals <= 0 under diagonal dominance
            t = np.abs(a) / h**2
            pos = a > 0
            couple(np.where(pos, p00, p10), np.where(pos, p11, p01), t)
            for e0, e1 in ((p00, p10), (p01, p11), (p00, p01), (p10, p11)):
                couple(e0, e1, -0.5 * t)

    rows = np.concatenate([np.asarray(r).ravel() for r in rows])
    cols = np.concatenate([np.asarray(c).ravel() for c in cols])
    vals = np.concatenate([np.asarray(v).ravel() for v in vals])
    A = sp.coo_matrix((vals, (rows, cols)), shape=(grid.size, grid.size)).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return A


@dataclass(frozen=True)
class LCPSystem:
    """``find u >= psi on K``: ``Au - b >= 0`` on K, ``= 0`` off K, complementary on K.

    ``A`` acts on the free unknowns only.  When built from a grid, ``interior``
    maps unknowns to flat node indices and the Dirichlet nodes carry fixed values.
    """

    A: sp.csr_matrix
    b: np.ndarray
    constrained: np.ndarray
    psi: np.ndarray
    grid: Optional[Grid] = None
    interior: Optional[np.ndarray] = None
    dirichlet_index: Optional[np.ndarray] = None
    dirichlet_values: Optional[np.ndarray] = None
    m_matrix: bool = True

    def __post_init__(self):
        A = sp.csr_matrix(self.A, dtype=float)
        A.sort_indices()
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "constrained", np.asarray(self.constrained, dtype=np.intp).reshape(-1))
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=float).reshape(-1))
        if A.shape[0] != A.shape[1] or A.shape[0] != self.b.size:
            raise AssemblyError("operator and right-hand side shapes disagree")
        if self.psi.size != self.constrained.size:
            raise AssemblyError("obstacle vector must match the constrained index set")
        if not np.all(np.isfinite(self.psi)):
            raise AssemblyError("obstacle values must be finite")

    @property
    def size(self) -> int:
        return self.b.size

    def lower_bounds(self) -> np.ndarray:
        lower = np.full(self.size, -np.inf)
        lower[self.constrained] = self.psi
        return lower

    def to_field(self, u: np.ndarray) -> GridFunction:
        if self.grid is None:
            raise AssemblyError("system was not built from a grid")
        full = np.empty(self.grid.size)
        full[self.interior] = u
        full[self.dirichlet_index] = self.dirichlet_values
        return GridFunction(self.grid, full)

    def from_field(self, u) -> np.ndarray:
        if isinstance(u, GridFunction):
            return np.asarray(u.values[self.interior], dtype=float)
        return np.asarray(u, dtype=float).reshape(-1)

    def constrained_nodes(self) -> np.ndarray:
        """Flat grid indices of the constrained unknowns."""
        return self.interior[self.constrained] if self.interior is not None else self.constrained


def is_m_matrix(A: sp.spmatrix) -> bool:
    A = sp.csr_matrix(A)
    diag = A.diagonal()
    off = A - sp.diags(diag)
    return bool(np.all(diag > 0) and (off.nnz == 0 or off.data.max() <= 1e-14 * np.abs(diag).max()))


def assemble_lcp(spec: ProblemSpec) -> LCPSystem:
    grid = spec.grid
    A_full = assemble_operator(spec)
    boundary = grid.boundary_mask()
    interior = np.flatnonzero(~boundary)
    bnd = np.flatnonzero(boundary)
    g = spec.dirichlet_values()[bnd]
    A_II = A_full[interior][:, interior].tocsr()
    A_IB = A_full[interior][:, bnd].tocsr()
    f = spec.source_values()[interior]
    b = -f - A_IB @ g

    nodes = manifold_constrained_nodes(grid, spec.manifold)
    pos = np.full(grid.size, -1, dtype=np.intp)
    pos[interior] = np.arange(interior.size)
    keep = pos[nodes.indices] >= 0
    constrained = pos[nodes.indices[keep]]
    psi = np.asarray(spec.obstacle(nodes.feet[keep]), dtype=float).reshape(-1)
    if spec.shift is not None:
        psi = psi - spec.shift[nodes.indices[keep]]
    mm = is_m_matrix(A_II)
    if not mm:
        log.warning("assembled operator is not an M-matrix; comparison principle not guaranteed")
    return LCPSystem(
        A=A_II,
        b=b,
        constrained=constrained,
        psi=psi,
        grid=grid,
        interior=interior,
        dirichlet_index=bnd,
        dirichlet_values=g,
        m_matrix=mm,
    )


def reduce_source(spec: ProblemSpec) -> tuple[GridFunction, ProblemSpec]:
    """Remove the source by an unconstrained solve ``div(a grad w) = f``, ``w = 0`` on the box.

    The returned problem has ``f = 0`` and its unknown is ``u - w``: obstacle and
    boundary data are lowered by ``w`` through the node ``shift``.
    """
    grid = spec.grid
    f = spec.source_values()
    if not np.any(f):
        return GridFunction(grid, np.zeros(grid.size)), replace(spec, source=None)
    A_full = assemble_operator(spec)
    interior = np.flatnonzero(~grid.boundary_mask())
    A_II = A_full[interior][:, interior].tocsc()
    try:
        w_int = spla.spsolve(A_II, -f[interior])
    except RuntimeError as exc:  # singular factorization
        raise AssemblyError(f"source reduction solve failed: {exc}") from exc
    if not np.all(np.isfinite(w_int)):
        raise AssemblyError("source reduction solve failed: non-finite solution")
    w = np.zeros(grid.size)
    w[interior] = w_int
    shift = w if spec.shift is None else spec.shift + w
    return GridFunction(grid, w), replace(spec, source=None, shift=shift)


def _householder_to(v: np.ndarray) -> np.ndarray:
    """Symmetric orthogonal ``H`` with ``H e_n = v`` (unit ``v``)."""
    n = v.size
    e = np.zeros(n)
    e[-1] = 1.0
    w = e - v
    nw = np.dot(w, w)
    if nw < 1e-28:
        return np.eye(n)
    return np.eye(n) - 2.0 * np.outer(w, w) / nw


def _transformed_manifold(manifold: ThinManifold, T: np.ndarray) -> ThinManifold:
    """Graph of ``{y : (T y)_n = g((T y)')}`` over ``y'``, found by Newton in ``y_n``."""
    n = T.shape[0]

    def solve(yt):
        yt = np.asarray(yt, dtype=float)
        lead = yt.shape[:-1]
        yt2 = yt.reshape(-1, n - 1)
        t = np.zeros(yt2.shape[0])
        for _ in range(50):
            y = np.concatenate([yt2, t[:, None]], axis=1)
            x = y @ T.T
            resid = x[:, -1] - manifold.height(x[:, :-1])
            dgrad = manifold.gradient(x[:, :-1])
            deriv = T[-1, -1] - dgrad @ T[:-1, -1]
            step = resid / deriv
            t = t - step
            if np.max(np.abs(step), initial=0.0) < 1e-15:
                break
        y = np.concatenate([yt2, t[:, None]], axis=1)
        return t.reshape(lead), y

    def graph(yt):
        return solve(yt)[0]

    def gradient(yt):
        _, y = solve(yt)
        x = y @ T.T
        dgrad = manifold.gradient(x[:, :-1])
        dG_dyt = T[-1, :-1] - dgrad @ T[:-1, :-1]
        dG_dt = T[-1, -1] - dgrad @ T[:-1, -1]
        out = -dG_dyt / dG_dt[:, None]
        return out.reshape(np.shape(yt))

    flat = manifold.flat and np.allclose(T[-1, :-1], 0.0) and np.allclose(T[:-1, -1], 0.0)
    if flat:
        return manifold
    return ThinManifold(graph, gradient, beta=manifold.beta, flat=False, name=f"{manifold.name}@T")


def tangential_gradient(spec: ProblemSpec, step: float = 1e-6) -> np.ndarray:
    """Gradient at 0 of ``x' -> obstacle(x', g(x'))``."""
    n = spec.grid.n
    grad = np.zeros(n - 1)
    for i in range(n - 1):
        e = np.zeros((2, n - 1))
        e[0, i], e[1, i] = step, -step
        feet = np.concatenate([e, spec.manifold.height(e)[:, None]], axis=1)
        vals = np.asarray(spec.obstacle(feet), dtype=float)
        grad[i] = (vals[0] - vals[1]) / (2.0 * step)
    return grad


def _divergence_of_flux(coef: EllipticCoefficients, slope: np.ndarray, step: float = 1e-5) -> Field:
    """``x -> div(a(x) slope)`` by central differences of the coefficient field."""
    n = slope.size

    def div(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for i in range(n):
            dx = np.zeros(n)
            dx[i] = step
            ai = (coef(x + dx)[..., i, :] - coef(x - dx)[..., i, :]) / (2 * step)
            out += ai @ slope
        return out

    return div


def normalize_problem(spec: ProblemSpec, tol: float = 1e-12) -> ProblemSpec:
    """Bring the data to normalized form: ``a(0) = I``, ``phi(0) = 0``, tangential ``grad phi(0) = 0``.

    ``a(0)`` is removed by ``x = T y`` with ``T = a(0)^{1/2} H``, ``H`` a reflection
    that keeps the tangent plane of M at 0 equal to ``{y_n = 0}``.  The affine
    part ``l(x) = phi(0) + grad_tau phi(0) . x'`` is then subtracted from the
    obstacle and the boundary data; the source absorbs ``div(a grad l)``.
    """
    grid = spec.grid
    n = grid.n
    if n > 1:
        spec.manifold.check_normalized(n)
    a0 = spec.coefficients.at_origin(n)
    eig, vec = np.linalg.eigh(0.5 * (a0 + a0.T))
    if eig.min() <= 0:
        raise EllipticityError("a(0) is not positive definite")
    if not np.allclose(a0, np.eye(n), atol=tol):
        if spec.shift is not None:
            raise AssemblyError("normalize coordinates before reducing the source")
        S = (vec * np.sqrt(eig)) @ vec.T
        Sinv = (vec / np.sqrt(eig)) @ vec.T
        v = S[:, -1] / np.linalg.norm(S[:, -1])
        H = _householder_to(v)
        T = S @ H
        Tinv = H @ Sinv
        old = spec

        def pull(fn):
            return None if fn is None else (lambda y, fn=fn: fn(np.asarray(y, dtype=float) @ T.T))

        coef = EllipticCoefficients(
            lambda y: Tinv @ old.coefficients(np.asarray(y, dtype=float) @ T.T) @ Tinv.T,
            lam=old.coefficients.lam / eig.max(),
            Lam=old.coefficients.Lam / eig.min(),
            gamma=old.coefficients.gamma,
            name=f"{old.coefficients.name}@T",
        )
        spec = replace(
            spec,
            coefficients=coef,
            manifold=_transformed_manifold(old.manifold, T) if n > 1 else old.manifold,
            obstacle=pull(old.obstacle),
            dirichlet=pull(old.dirichlet),
            source=pull(old.source),
        )

    phi0 = float(np.asarray(spec.obstacle(np.zeros((1, n))), dtype=float).reshape(-1)[0])
    dphi = tangential_gradient(spec) if n > 1 else np.zeros(0)
    if abs(phi0) <= tol and np.all(np.abs(dphi) <= 1e-8):
        return spec
    slope = np.concatenate([dphi, [0.0]])

    def affine(x, phi0=phi0, slope=slope):
        return phi0 + np.asarray(x, dtype=float) @ slope

    old = spec
    div = _divergence_of_flux(old.coefficients, slope)

    def source(x):
        base = 0.0 if old.source is None else old.source(x)
        return base - div(x)

    correction = div(grid.points())
    return replace(
        spec,
        obstacle=lambda x: old.obstacle(x) - affine(x),
        dirichlet=lambda x: old.dirichlet(x) - affine(x),
        source=old.source if not np.any(np.abs(correction) > 1e-12) else source,
    )
