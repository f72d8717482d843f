"""Uniform Cartesian grids, grid functions, thin manifolds and sphere samplers.

Node ordering is row-major (C order) over axes ``x_1, ..., x_n``; the last
axis is the direction normal to the flat thin manifold ``{x_n = 0}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class GridError(ValueError):
    """Invalid grid geometry or out-of-box query."""


@dataclass(frozen=True)
class Grid:
    n: int
    L: float
    m: int

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise GridError(f"dimension n must be 1, 2 or 3, got {self.n}")
        if self.m < 3 or self.m % 2 == 0:
            raise GridError(f"nodes-per-axis m must be odd and >= 3 (origin must be a node), got {self.m}")
        if not self.L > 0:
            raise GridError(f"half-width L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.m - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.n

    @property
    def size(self) -> int:
        return self.m**self.n

    @property
    def origin_index(self) -> tuple[int, ...]:
        return ((self.m - 1) // 2,) * self.n

    @property
    def axis(self) -> np.ndarray:
        # integer offsets keep the origin exactly at 0.0
        return (np.arange(self.m) - (self.m - 1) // 2) * self.h

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (n,)``."""
        mesh = np.meshgrid(*([self.axis] * self.n), indexing="ij")
        return np.stack(mesh, axis=-1)

    def points(self) -> np.ndarray:
        """Node coordinates flattened to shape ``(m**n, n)``."""
        return self.coords().reshape(-1, self.n)

    def flat_index(self, idx) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(idx).T), self.shape)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.n):
            sl = [slice(None)] * self.n
            sl[k] = 0
            mask[tuple(sl)] = True
            sl[k] = -1
            mask[tuple(sl)] = True
        return mask.ravel()

    def contains(self, x, margin: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all(np.abs(x) <= self.L - margin + 1e-12 * self.L, axis=-1)


def build_grid(n: int, L: float, m: int) -> Grid:
    return Grid(int(n), float(L), int(m))


@dataclass(frozen=True)
class GridFunction:
    """Scalar field sampled at the nodes of ``grid``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float).reshape(-1)
        if vals.size != self.grid.size:
            raise GridError(f"expected {self.grid.size} values, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise GridError("grid function has non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(grid, np.asarray(func(grid.points()), dtype=float))

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def __call__(self, x) -> np.ndarray:
        return interpolate_many(self, x)


def interpolate_many(u: GridFunction, x) -> np.ndarray:
    """Multilinear interpolation at points ``x`` of shape ``(..., n)``."""
    grid = u.grid
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != grid.n:
        if grid.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        else:
            raise GridError(f"points must have trailing dimension {grid.n}")
    lead = x.shape[:-1]
    pts = x.reshape(-1, grid.n)
    if not np.all(grid.contains(pts)):
        raise GridError("interpolation point outside the grid box")
    s = (pts + grid.L) / grid.h
    base = np.clip(np.floor(s).astype(np.intp), 0, grid.m - 2)
    frac = s - base
    arr = u.as_array()
    out = np.zeros(pts.shape[0])
    for corner in range(2**grid.n):
        w = np.ones(pts.shape[0])
        idx = []
        for k in range(grid.n):
            bit = (corner >> k) & 1
            w *= frac[:, k] if bit else 1.0 - frac[:, k]
            idx.append(base[:, k] + bit)
        out += w * arr[tuple(idx)]
    return out.reshape(lead)


def interpolate(u: GridFunction, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(interpolate_many(u, x[None, :])[0])


@dataclass(frozen=True)
class ThinManifold:
    """Graph manifold ``{x_n = g(x')}`` with ``g(0) = 0`` and ``grad g(0) = 0``.

    ``graph`` maps an array of tangential coordinates ``(..., n-1)`` to heights.
    """

    graph: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    beta: float = 1.0
    flat: bool = False
    name: str = "manifold"

    def __post_init__(self):
        if not self.beta > 0.5:
            raise GridError(f"manifold regularity beta must exceed 1/2, got {self.beta}")

    def height(self, xt: np.ndarray) -> np.ndarray:
        xt = np.asarray(xt, dtype=float)
        if xt.shape[-1] == 0:
            return np.zeros(xt.shape[:-1])
        return np.asarray(self.graph(xt), dtype=float)

    def check_normalized(self, dim: int, tol: float = 1e-12) -> None:
        zero = np.zeros((1, dim - 1))
        if dim == 1:
            return
        if abs(float(self.height(zero)[0])) > tol:
            raise GridError("manifold must pass through the origin")
        if np.max(np.abs(self.gradient(zero))) > tol:
            raise GridError("manifold normal at the origin must be e_n")


def flat_manifold() -> ThinManifold:
    return ThinManifold(
        graph=lambda xt: np.zeros(np.shape(xt)[:-1]),
        gradient=lambda xt: np.zeros(np.shape(xt)),
        beta=1.0,
        flat=True,
        name="flat",
    )


def parabolic_manifold(c: float) -> ThinManifold:
    """``x_n = c |x'|^2``; smooth, so any ``beta`` up to 1 applies."""
    return ThinManifold(
        graph=lambda xt: c * np.sum(np.asarray(xt) ** 2, axis=-1),
        gradient=lambda xt: 2.0 * c * np.asarray(xt),
        beta=1.0,
        flat=(c == 0.0),
        name=f"parabola({c:g})",
    )


@dataclass(frozen=True)
class ConstrainedNodes:
    """Discrete carrier of the thin constraint: one node per grid column."""

    indices: np.ndarray  # flat node indices
    feet: np.ndarray  # foot points (x', g(x')) on M, shape (k, n)

    def __len__(self):
        return self.indices.size


def manifold_constrained_nodes(grid: Grid, manifold: ThinManifold) -> ConstrainedNodes:
    """Nearest node layer to ``x_n = g(x')`` in every column of the grid."""
    n, m, h, L = grid.n, grid.m, grid.h, grid.L
    if n == 1:
        idx = np.array([grid.flat_index(np.array([grid.origin_index]))[0]])
        return ConstrainedNodes(idx, np.zeros((1, 1)))
    tang = np.stack(np.meshgrid(*([grid.axis] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
    heights = manifold.height(tang)
    layer = np.rint((heights + L) / h).astype(np.intp)
    inside = (layer >= 0) & (layer < m) & (np.abs(heights) <= L)
    col = np.stack(np.unravel_index(np.arange(m ** (n - 1)), (m,) * (n - 1)), axis=-1)
    multi = np.concatenate([col, layer[:, None]], axis=1)[inside]
    feet = np.concatenate([tang, heights[:, None]], axis=1)[inside]
    return ConstrainedNodes(grid.flat_index(multi), feet)


def _sphere_measure(n: int, r: float) -> float:
    return {1: 2.0, 2: 2.0 * np.pi * r, 3: 4.0 * np.pi * r * r}[n]


@dataclass(frozen=True)
class SphereSampler:
    r: float
    q: int
    points: np.ndarray
    weights: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def measure(self) -> float:
        return float(self.weights.sum())


def sphere_nodes(n: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit-sphere directions and weights (weights sum to the unit-sphere measure)."""
    if n == 1:
        return np.array([[-1.0], [1.0]]), np.array([1.0, 1.0])
    if n == 2:
        if q < 16:
            raise GridError(f"2D sphere sampler needs q >= 16, got {q}")
        # half-step offset keeps samples off the axes
        theta = 2.0 * np.pi * (np.arange(q) + 0.5) / q
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return dirs, np.full(q, 2.0 * np.pi / q)
    if q < 64:
        raise GridError(f"3D sphere sampler needs q >= 64, got {q}")
    n_lat = int(np.floor(np.sqrt(q)))
    n_lon = q // n_lat
    edges = np.linspace(0.0, np.pi, n_lat + 1)
    theta = 0.5 * (edges[:-1] + edges[1:])
    # exact band areas make the weights sum to 4*pi
    band = 2.0 * np.pi * (np.cos(edges[:-1]) - np.cos(edges[1:])) / n_lon
    lon = 2.0 * np.pi * (np.arange(n_lon) + 0.5) / n_lon
    th, ph = np.meshgrid(theta, lon, indexing="ij")
    dirs = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1).reshape(-1, 3)
    weights = np.repeat(band, n_lon)
    return dirs, weights


def build_sphere_sampler(grid: Grid, r: float, q: int = 720, center=None) -> SphereSampler:
    center = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    if not r > 0:
        raise GridError(f"sphere radius must be positive, got {r}")
    reach = r + np.max(np.abs(center)) if center.size else r
    if reach > 0.9 * grid.L + 1e-12:
        raise GridError(f"sphere of radius {r} around {center.tolist()} leaves the 0.9*L margin of the box")
    dirs, weights = sphere_nodes(grid.n, q)
    scale = r ** (grid.n - 1)
    return SphereSampler(
        r=float(r),
        q=int(weights.size),
        points=center + r * dirs,
        weights=weights * scale,
        center=center,
    )
