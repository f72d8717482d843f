"""Boundary integrals, the truncated Almgren frequency and decay-exponent fits.

A field is either a :class:`GridFunction` (sampled by multilinear
interpolation) or any callable on points with an ``n`` attribute, which is
then sampled exactly on the sphere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .grid import GridError, GridFunction, SphereSampler, build_sphere_sampler, interpolate_many, sphere_nodes

Sampled = Union[GridFunction, Callable[[np.ndarray], np.ndarray]]


class FrequencyError(ValueError):
    pass


def field_dimension(u: Sampled, n: Optional[int] = None) -> int:
    if isinstance(u, GridFunction):
        return u.grid.n
    dim = getattr(u, "n", n)
    if dim is None:
        raise FrequencyError("analytic fields need a dimension (attribute n)")
    return int(dim)


def evaluate(u: Sampled, x: np.ndarray) -> np.ndarray:
    if isinstance(u, GridFunction):
        return interpolate_many(u, x)
    return np.asarray(u(x), dtype=float)


def default_q(n: int) -> int:
    return {1: 2, 2: 720, 3: 64 * 64}[n]


def boundary_integral_F(u: Sampled, r: float, sampler: Optional[SphereSampler] = None, q=None, center=None) -> float:
    """``F(r)``: integral of ``u^2`` over the sphere of radius ``r``."""
    if sampler is None:
        n = field_dimension(u)
        q = default_q(n) if q is None else q
        if isinstance(u, GridFunction):
            sampler = build_sphere_sampler(u.grid, r, q, center)
        else:
            dirs, w = sphere_nodes(n, q)
            c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
            sampler = SphereSampler(r, w.size, c + r * dirs, w * r ** (n - 1), c)
    vals = evaluate(u, sampler.points)
    return float(np.sum(sampler.weights * vals * vals))


@dataclass(frozen=True)
class FrequencyProfile:
    """Frequency samples on the geometric radii ``r_i = r_max * rho**i``."""

    n: int
    r: np.ndarray
    F: np.ndarray
    G: np.ndarray
    truncated: np.ndarray
    phi: np.ndarray
    d: np.ndarray
    truncation_exponent: float

    @property
    def branch(self) -> np.ndarray:
        return np.where(self.truncated, "T", "F")

    def window(self, lo: float, hi: float) -> np.ndarray:
        return (self.r >= lo * (1 - 1e-12)) & (self.r <= hi * (1 + 1e-12))


@dataclass(frozen=True)
class RegularityParams:
    alpha: float = 0.45
    beta: float = 1.0
    eps0: Optional[float] = None
    delta0: float = 0.0
    C_max: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha < 0.5:
            raise FrequencyError(f"alpha must lie in (0, 1/2), got {self.alpha}")
        if not self.beta > 0.5:
            raise FrequencyError(f"beta must exceed 1/2, got {self.beta}")
        budget = self.alpha + self.beta - 1.0
        if self.eps0 is None:
            object.__setattr__(self, "eps0", budget)
        if not self.eps0 > 0:
            raise FrequencyError(f"epsilon0 must be positive (alpha + beta > 1), got {self.eps0}")
        if self.eps0 > budget + 1e-12:
            raise FrequencyError(f"epsilon0 = {self.eps0} exceeds alpha + beta - 1 = {budget}")
        if not 0 <= self.delta0 < self.beta - 0.5:
            raise FrequencyError(f"delta0 must lie in [0, beta - 1/2), got {self.delta0}")
        if self.delta0 > 0 and not self.delta0 + self.eps0 < budget:
            raise FrequencyError(
                f"delta0 + epsilon0 = {self.delta0 + self.eps0} must be below alpha + beta - 1 = {budget}"
            )


def _log_slopes(lr: np.ndarray, lg: np.ndarray, trunc: np.ndarray, exponent: float) -> np.ndarray:
    k = lr.size
    phi = np.empty(k)
    for i in range(k):
        lo, hi = max(i - 1, 0), min(i + 1, k - 1)
        if trunc[lo] and trunc[hi]:
            phi[i] = exponent
        else:
            phi[i] = (lg[lo] - lg[hi]) / (lr[lo] - lr[hi])
    return phi


def profile_from_F(n: int, r: np.ndarray, F: np.ndarray, delta0: float = 0.0) -> FrequencyProfile:
    """Assemble a profile from precomputed ``F`` values on a geometric radius grid."""
    r = np.asarray(r, dtype=float)
    F = np.asarray(F, dtype=float)
    if r.size < 3 or np.any(np.diff(r) >= 0):
        raise FrequencyError("radii must be strictly decreasing with at least 3 entries")
    if np.any(F < 0):
        raise FrequencyError("F must be nonnegative")
    exponent = n + 2 + delta0
    floor = r**exponent
    trunc = F <= floor
    lr = np.log(r)
    with np.errstate(divide="ignore"):
        lg = np.where(trunc, exponent * lr, np.log(np.where(trunc, 1.0, F)))
    phi = _log_slopes(lr, lg, trunc, exponent)
    d = np.sqrt(r ** (-(n - 1)) * F)
    return FrequencyProfile(n, r, F, np.maximum(F, floor), trunc, phi, d, exponent)


def compute_profile(
    u: Sampled,
    r_max: float,
    rho: float,
    count: int,
    q: Optional[int] = None,
    center=None,
    delta0: float = 0.0,
    n: Optional[int] = None,
) -> FrequencyProfile:
    """``Phi_i`` as the centred log-log slope of ``max(F, r^{n+2+delta0})``.

    Endpoints use one-sided differences.  Where the truncation branch holds at
    both stencil points the value is exactly the truncation exponent.
    """
    dim = field_dimension(u, n)
    if not 0.5 < rho < 1.0:
        raise FrequencyError(f"radius ratio rho must lie in (0.5, 1), got {rho}")
    if count < 8:
        raise FrequencyError(f"profile needs at least 8 radii, got {count}")
    if isinstance(u, GridFunction):
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        if r_max + np.max(np.abs(c)) > 0.9 * u.grid.L + 1e-12:
            raise FrequencyError(f"r_max = {r_max} exceeds 0.9 L around the centre")
    r = r_max * rho ** np.arange(count)
    F = np.array([boundary_integral_F(u, ri, q=q, center=center) for ri in r])
    return profile_from_F(dim, r, F, delta0)


def phi_truncated_delta(u: Sampled, r_max: float, rho: float, count: int, delta0: float, **kw) -> FrequencyProfile:
    return compute_profile(u, r_max, rho, count, delta0=delta0, **kw)


@dataclass(frozen=True)
class MonotonicityReport:
    C_min: float
    passed: bool
    C_max: float
    slack: float
    eps0: float
    max_drop_excess: float


def _violation(phi: np.ndarray, r: np.ndarray, C: float, eps0: float) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        psi = phi * np.exp((C / eps0) * r**eps0)
        # r decreases with the index: require psi_i >= psi_{i+1}
        worst = float(np.max(psi[1:] - psi[:-1], initial=-np.inf))
    return np.inf if np.isnan(worst) else worst


def almost_monotonicity_check(
    profile: FrequencyProfile,
    params: RegularityParams,
    slack: float = 0.05,
    C_max: Optional[float] = None,
    C_ceiling: float = 1e4,
) -> MonotonicityReport:
    """Smallest ``C >= 0`` making ``Phi * exp(C r^eps0 / eps0)`` nondecreasing in ``r`` within ``slack``.

    Also reports how far the raw profile drops going outward beyond
    ``slack + C (r_i^eps0 - r_{i+1}^eps0)`` at that ``C`` (``<= 0`` means never).
    """
    if profile.r.size < 8:
        raise FrequencyError("almost-monotonicity needs at least 8 radii")
    eps0 = params.eps0
    C_max = params.C_max if C_max is None else C_max
    phi, r = profile.phi, profile.r
    # keep the exponential weight finite in double precision
    C_ceiling = min(C_ceiling, 700.0 * eps0 / float(np.max(r)) ** eps0)
    if _violation(phi, r, 0.0, eps0) <= slack:
        C = 0.0
    elif _violation(phi, r, C_ceiling, eps0) > slack:
        C = np.inf
    else:
        lo, hi = 0.0, min(1.0, C_ceiling)
        while _violation(phi, r, hi, eps0) > slack:
            lo, hi = hi, min(2 * hi, C_ceiling)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _violation(phi, r, mid, eps0) > slack:
                lo = mid
            else:
                hi = mid
        C = hi
    if np.isfinite(C):
        allowed = slack + C * (r[:-1] ** eps0 - r[1:] ** eps0)
        drop = phi[1:] - phi[:-1]
        excess = float(np.max(drop - allowed))
    else:
        excess = np.inf
    return MonotonicityReport(float(C), bool(C <= C_max), float(C_max), float(slack), float(eps0), excess)


@dataclass(frozen=True)
class DecayFit:
    name: str
    exponent: float
    log_constant: float
    residual: float
    r_lo: float
    r_hi: float
    count: int

    @property
    def constant(self) -> float:
        return float(np.exp(self.log_constant))


def fit_power_law(r, values, window: Sequence[float], name: str = "fit", min_points: int = 5) -> DecayFit:
    """Least-squares line through ``(log r, log values)`` inside ``window``."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(values, dtype=float)
    lo, hi = window
    mask = (r >= lo * (1 - 1e-12)) & (r <= hi * (1 + 1e-12)) & (v > 0)
    if mask.sum() < min_points:
        raise FrequencyError(f"{name}: only {int(mask.sum())} usable radii in [{lo}, {hi}], need {min_points}")
    x, y = np.log(r[mask]), np.log(v[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return DecayFit(
        name=name,
        exponent=float(slope),
        log_constant=float(intercept),
        residual=float(np.sqrt(np.mean(resid**2))),
        r_lo=float(r[mask].min()),
        r_hi=float(r[mask].max()),
        count=int(mask.sum()),
    )


def decay_fit_F(profile: FrequencyProfile, window: Sequence[float] = (0.05, 0.4)) -> DecayFit:
    keep = ~profile.truncated
    return fit_power_law(profile.r[keep], profile.F[keep], window, name="F")


def sup_ball(u: GridFunction, r: float, center=None) -> float:
    """Max of ``|u|`` over nodes within distance ``r`` of the centre."""
    grid = u.grid
    c = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    if r + np.max(np.abs(c)) > 0.9 * grid.L + 1e-12:
        raise FrequencyError(f"ball of radius {r} exceeds 0.9 L")
    pts = grid.points()
    inside = np.sum((pts - c) ** 2, axis=1) <= r * r * (1 + 1e-12)
    return float(np.max(np.abs(u.values[inside])))


def geometric_radii(window: Sequence[float], count: int) -> np.ndarray:
    lo, hi = window
    return np.geomspace(hi, lo, count)


def decay_fit_sup(u: GridFunction, window: Sequence[float] = (0.05, 0.4), count: int = 12, center=None) -> DecayFit:
    r = geometric_radii(window, count)
    s = np.array([sup_ball(u, ri, center) for ri in r])
    return fit_power_law(r, s, window, name="sup")


def _cell_fractions(offsets: np.ndarray, h: float, tau: float, n: int, sub: int = 4) -> np.ndarray:
    """Fraction of each node cell inside the ball, by ``sub**n`` subsamples on boundary cells."""
    dist = np.linalg.norm(offsets, axis=1)
    half_diag = 0.5 * h * np.sqrt(n)
    frac = np.where(dist + half_diag <= tau, 1.0, 0.0)
    cut = (dist + half_diag > tau) & (dist - half_diag < tau)
    if np.any(cut):
        s = ((np.arange(sub) + 0.5) / sub - 0.5) * h
        local = np.stack(np.meshgrid(*([s] * n), indexing="ij"), axis=-1).reshape(-1, n)
        pts = offsets[cut][:, None, :] + local[None, :, :]
        frac[cut] = np.mean(np.sum(pts**2, axis=-1) <= tau * tau, axis=1)
    return frac


def mean_value_residual(u: GridFunction, x0, tau: float) -> float:
    """``|avg_{B_tau(x0)} u^2 - u(x0)^2|`` with partial-cell weights at the ball boundary."""
    grid = u.grid
    x0 = np.asarray(x0, dtype=float)
    if np.any(np.abs(x0) + tau > grid.L + 1e-12):
        raise FrequencyError(f"ball B_{tau}({x0.tolist()}) leaves the box")
    h = grid.h
    lo = np.maximum(np.floor((x0 - tau + grid.L) / h).astype(int) - 1, 0)
    hi = np.minimum(np.ceil((x0 + tau + grid.L) / h).astype(int) + 1, grid.m - 1)
    sl = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
    pts = grid.coords()[sl].reshape(-1, grid.n)
    vals = u.as_array()[sl].reshape(-1)
    w = _cell_fractions(pts - x0, h, tau, grid.n)
    avg = float(np.sum(w * vals * vals) / np.sum(w))
    centre = float(interpolate_many(u, x0[None, :])[0])
    return abs(avg - centre * centre)


def mean_value_decay(u: GridFunction, x0, taus: Sequence[float]) -> DecayFit:
    taus = np.asarray(taus, dtype=float)
    res = np.array([mean_value_residual(u, x0, t) for t in taus])
    return fit_power_law(taus, res, (taus.min(), taus.max()), name="mean_value")


@dataclass(frozen=True)
class ScalingReport:
    lhs: float
    rhs: float
    comparable: bool
    passed: bool
    tolerance: float


def scaling_identity_check(
    u: GridFunction,
    r: float,
    rho: float = 0.9,
    q: Optional[int] = None,
    center=None,
    target=None,
    rel_tol: float = 0.02,
) -> ScalingReport:
    """Compare ``Phi_u(r)`` with ``Phi_{u_r}(1)``, the frequency of the blow-up rescaling.

    The right side is the untruncated log-slope of ``F_{u_r}`` at 1, because
    ``F_{u_r}(1) = 1`` sits exactly on the truncation threshold by construction.
    """
    from .blowup import rescale_blowup  # local: blowup builds on this module
    from .grid import Grid

    n = u.grid.n
    radii = np.array([r / rho, r, r * rho])
    F = np.array([boundary_integral_F(u, ri, q=q, center=center) for ri in radii])
    exponent = n + 2
    trunc = F <= radii**exponent
    lhs = float((np.log(F[0]) - np.log(F[2])) / (np.log(radii[0]) - np.log(radii[2]))) if np.all(F > 0) else float(exponent)
    if np.any(trunc):
        return ScalingReport(lhs, float("nan"), False, False, rel_tol * lhs)
    if target is None:
        # spacing deliberately incommensurate with typical source grids
        target = Grid(n, 1.25, 101)
    ur = rescale_blowup(u, r, target, q=q, center=center)
    s = np.array([1.0 / rho, rho])
    Fr = np.array([boundary_integral_F(ur, si, q=q) for si in s])
    rhs = float((np.log(Fr[0]) - np.log(Fr[1])) / (np.log(s[0]) - np.log(s[1])))
    tol = rel_tol * abs(lhs)
    return ScalingReport(lhs, rhs, True, bool(abs(lhs - rhs) <= tol), tol)


__all__ = [
    "DecayFit",
    "FrequencyError",
    "FrequencyProfile",
    "GridError",
    "MonotonicityReport",
    "RegularityParams",
    "ScalingReport",
    "almost_monotonicity_check",
    "boundary_integral_F",
    "compute_profile",
    "decay_fit_F",
    "decay_fit_sup",
    "fit_power_law",
    "mean_value_decay",
    "mean_value_residual",
    "phi_truncated_delta",
    "profile_from_F",
    "scaling_identity_check",
    "sup_ball",
]
