"""Blow-up rescalings, homogeneity degrees and closed-form reference solutions."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .frequency import (
    DecayFit,
    FrequencyError,
    Sampled,
    boundary_integral_F,
    compute_profile,
    field_dimension,
    fit_power_law,
)
from .grid import Grid, GridFunction, interpolate_many


class DegenerateBlowupError(FrequencyError):
    """``d_r = 0``: the sphere trace vanishes and the rescaling is undefined."""


@dataclass(frozen=True)
class OracleField:
    name: str
    n: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    degree: float
    contact: str

    @property
    def frequency(self) -> float:
        return 2.0 * self.degree + self.n - 1

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return self.evaluator(x)

    def sample(self, grid: Grid) -> GridFunction:
        return GridFunction.from_callable(grid, self)


def _three_halves(x1, xn):
    # principal branch: arg(x1 + i|xn|) in [0, pi]
    return np.real((x1 + 1j * np.abs(xn)) ** 1.5)


def exact_signorini_2d() -> OracleField:
    """``Re((x1 + i|x2|)^{3/2})``: the degree-3/2 global solution, contact set ``{x1 <= 0, x2 = 0}``."""
    return OracleField(
        name="oracle-3half-2d",
        n=2,
        evaluator=lambda x: _three_halves(x[..., 0], x[..., 1]),
        degree=1.5,
        contact="{x1 <= 0, x2 = 0}",
    )


def exact_signorini_3d() -> OracleField:
    """The 2D profile in ``(x1, x3)``, constant in ``x2``; contact set ``{x1 <= 0, x3 = 0}``."""
    return OracleField(
        name="oracle-3half-3d",
        n=3,
        evaluator=lambda x: _three_halves(x[..., 0], x[..., 2]),
        degree=1.5,
        contact="{x1 <= 0, x3 = 0}",
    )


def tent_1d(c: float = 1.0) -> OracleField:
    """``c (1 - |x|)``: minimizer on ``[-1, 1]`` with zero data and point obstacle ``u(0) >= c``."""
    if c < 0:
        raise ValueError("tent height must be nonnegative")
    return OracleField(
        name="tent-1d",
        n=1,
        evaluator=lambda x: c * (1.0 - np.abs(x[..., 0])),
        degree=1.0,
        contact="{0}",
    )


def tent_energy(c: float) -> float:
    return c * c


@dataclass(frozen=True)
class OracleVerification:
    harmonic_residual: float
    evaluator_mismatch: float
    min_trace: float
    complementarity: float
    max_jump_on_contact: float
    points: int

    @property
    def passed(self) -> bool:
        return (
            self.harmonic_residual <= 1e-8
            and self.evaluator_mismatch <= 1e-12
            and self.min_trace >= -1e-14
            and self.complementarity <= 1e-12
            and self.max_jump_on_contact <= 0.0
        )


@lru_cache(maxsize=1)
def _symbolic_upper_half():
    import sympy as s

    x, y = s.symbols("x y", real=True)
    rho = s.sqrt(x**2 + y**2)
    theta = s.atan2(y, x)
    u = rho ** s.Rational(3, 2) * s.cos(s.Rational(3, 2) * theta)
    lap = s.diff(u, x, 2) + s.diff(u, y, 2)
    uy = s.diff(u, y)
    mods = "numpy"
    return (
        s.lambdify((x, y), u, mods),
        s.lambdify((x, y), lap, mods),
        s.lambdify((x, y), uy, mods),
    )


def verify_signorini_oracle(oracle: Optional[OracleField] = None, count: int = 1000, seed: int = 0) -> OracleVerification:
    """Check the 2D oracle against an independent symbolic differentiation.

    Harmonicity at random points off the slit, ``u >= 0`` on ``{x2 = 0}``,
    ``u [du/dx2] = 0`` there and ``[du/dx2] <= 0`` on the contact set, where
    ``[du/dx2] = 2 du/dx2(x1, 0+)`` by even symmetry.
    """
    oracle = exact_signorini_2d() if oracle is None else oracle
    u_sym, lap_sym, uy_sym = _symbolic_upper_half()
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1.0, 1.0, size=(count, 2))
    pts[:, 1] = np.where(np.abs(pts[:, 1]) < 1e-3, 1e-3, pts[:, 1])
    up = np.column_stack([pts[:, 0], np.abs(pts[:, 1])])
    harmonic = float(np.max(np.abs(lap_sym(up[:, 0], up[:, 1]))))
    mismatch = float(np.max(np.abs(u_sym(up[:, 0], up[:, 1]) - oracle(pts))))

    xs = np.linspace(-1.0, 1.0, 401)
    xs = xs[xs != 0.0]
    trace = oracle(np.column_stack([xs, np.zeros_like(xs)]))
    jump = 2.0 * np.asarray(uy_sym(xs, np.zeros_like(xs)), dtype=float)
    contact = xs < 0
    return OracleVerification(
        harmonic_residual=harmonic,
        evaluator_mismatch=mismatch,
        min_trace=float(trace.min()),
        complementarity=float(np.max(np.abs(trace * jump))),
        max_jump_on_contact=float(np.max(jump[contact])),
        points=count,
    )


def blowup_scale(u: Sampled, r: float, q=None, center=None) -> float:
    """``d_r = (r^{-(n-1)} F(r))^{1/2}``."""
    n = field_dimension(u)
    return float(np.sqrt(r ** (-(n - 1)) * boundary_integral_F(u, r, q=q, center=center)))


def rescale_blowup(u: GridFunction, r: float, target: Grid, q=None, center=None) -> GridFunction:
    """``u_r(x) = u(center + r x) / d_r`` sampled on the nodes of ``target``."""
    grid = u.grid
    c = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    if r * target.L + np.max(np.abs(c)) > grid.L + 1e-12:
        raise FrequencyError(f"rescaled box r * L = {r * target.L} does not fit in the source grid")
    d = blowup_scale(u, r, q=q, center=c)
    if not d > 1e-300:
        raise DegenerateBlowupError(f"d_r = 0 at r = {r}: sphere trace vanishes")
    vals = interpolate_many(u, c + r * target.points()) / d
    return GridFunction(target, vals)


@dataclass(frozen=True)
class HomogeneityEstimate:
    fit: DecayFit
    frequency_degree: float

    @property
    def degree(self) -> float:
        return self.fit.exponent


def homogeneity_degree(
    u: Sampled,
    window: Sequence[float] = (0.1, 0.8),
    count: int = 12,
    q=None,
    center=None,
    rescaled: bool = False,
) -> HomogeneityEstimate:
    """Degree from the log-log slope of ``d_r``, plus ``(mean Phi - n + 1) / 2`` over the same radii.

    For blow-up rescalings (``rescaled=True``) the truncation threshold carries no
    meaning (``F_{u_r}(1) = 1`` sits on it by construction), so every radius with
    ``F > 0`` is used and the frequency is the untruncated log-slope.
    """
    n = field_dimension(u)
    lo, hi = window
    rho = (lo / hi) ** (1.0 / (count - 1))
    profile = compute_profile(u, hi, rho, count, q=q, center=center)
    if rescaled:
        live = profile.F > 0
        phi = np.gradient(np.log(np.where(live, profile.F, 1.0)), np.log(profile.r))
    else:
        live = ~profile.truncated
        phi = profile.phi
    if not np.any(live):
        raise FrequencyError("homogeneity window is dominated by the truncation branch")
    fit = fit_power_law(profile.r[live], profile.d[live], window, name="degree")
    implied = (float(np.mean(phi[live])) - n + 1) / 2.0
    return HomogeneityEstimate(fit, implied)


@dataclass(frozen=True)
class BlowupSequence:
    radii: np.ndarray
    fields: tuple
    distances: np.ndarray  # pairwise L2(B_1/2)
    gradient_distances: np.ndarray  # pairwise H1-seminorm on B_1/2
    degrees: np.ndarray
    frequencies: np.ndarray
    normalization: np.ndarray  # F_{u_r}(1), should be 1

    @property
    def limit(self) -> GridFunction:
        return self.fields[-1]

    def consecutive_distances(self) -> np.ndarray:
        k = len(self.fields)
        return np.array([self.distances[i, i + 1] for i in range(k - 1)])


def _ball_norms(a: GridFunction, b: GridFunction, radius: float = 0.5) -> tuple[float, float]:
    grid = a.grid
    h = grid.h
    diff = (a.values - b.values).reshape(grid.shape)
    inside = np.sum(grid.points() ** 2, axis=1) <= radius * radius
    l2 = float(np.sqrt(np.sum(diff.reshape(-1)[inside] ** 2) * h**grid.n))
    grads = np.gradient(diff, h) if grid.n > 1 else [np.gradient(diff, h)]
    g2 = sum(g.reshape(-1)[inside] ** 2 for g in grads)
    return l2, float(np.sqrt(np.sum(g2) * h**grid.n))


def blowup_sequence(
    u: GridFunction,
    r0: float,
    depth: int,
    target: Optional[Grid] = None,
    q=None,
    center=None,
    floor: float = 8.0,
) -> BlowupSequence:
    """Dyadic rescalings ``u_{r_k}``, ``r_k = r0 2^{-k}``, ``k = 0..depth``, on a common unit grid."""
    grid = u.grid
    n = grid.n
    if r0 > 0.45 * grid.L + 1e-12:
        raise FrequencyError(f"r0 = {r0} exceeds 0.45 L")
    radii = r0 * 2.0 ** -np.arange(depth + 1)
    if radii[-1] < floor * grid.h:
        raise FrequencyError(
            f"depth {depth} reaches r = {radii[-1]:.4g} below the resolution floor {floor} h = {floor * grid.h:.4g}"
        )
    target = Grid(n, 1.25, 101) if target is None else target
    fields = tuple(rescale_blowup(u, r, target, q=q, center=center) for r in radii)
    k = len(fields)
    dist = np.zeros((k, k))
    gdist = np.zeros((k, k))
    for i, j in itertools.combinations(range(k), 2):
        dist[i, j], gdist[i, j] = _ball_norms(fields[i], fields[j])
        dist[j, i], gdist[j, i] = dist[i, j], gdist[i, j]
    rho = 0.9
    degrees, freqs, norms = [], [], []
    for f in fields:
        s = np.array([1.0 / rho, 1.0, rho])
        F = np.array([boundary_integral_F(f, si, q=q) for si in s])
        norms.append(F[1])
        freqs.append(float((np.log(F[0]) - np.log(F[2])) / (np.log(s[0]) - np.log(s[2]))))
        degrees.append(homogeneity_degree(f, window=(0.25, 0.9), count=8, q=q, rescaled=True).degree)
    return BlowupSequence(
        radii=radii,
        fields=fields,
        distances=dist,
        gradient_distances=gdist,
        degrees=np.array(degrees),
        frequencies=np.array(freqs),
        normalization=np.array(norms),
    )


def sample_field(u: Sampled, grid: Grid) -> GridFunction:
    if isinstance(u, GridFunction):
        return u
    return GridFunction.from_callable(grid, u)


__all__ = [
    "BlowupSequence",
    "DegenerateBlowupError",
    "HomogeneityEstimate",
    "OracleField",
    "OracleVerification",
    "blowup_scale",
    "blowup_sequence",
    "exact_signorini_2d",
    "exact_signorini_3d",
    "homogeneity_degree",
    "rescale_blowup",
    "sample_field",
    "tent_1d",
    "tent_energy",
    "verify_signorini_oracle",
]
