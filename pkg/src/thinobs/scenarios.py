"""Named scenarios: closed-form problem data plus expected outcomes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .assembly import (
    EllipticCoefficients,
    ProblemSpec,
    identity_coefficients,
    sine_perturbed_coefficients,
)
from .blowup import OracleField, exact_signorini_2d, exact_signorini_3d, tent_1d
from .grid import Grid, ThinManifold, flat_manifold, parabolic_manifold


@dataclass(frozen=True)
class ScenarioSpec:
    """Registry entry.

    ``odd_mode`` marks scenarios whose Dirichlet data carries an extra term
    ``t * (x_n - g(x'))``; the runner tunes ``t`` so the solution has no
    normal slope at the free boundary point, i.e. is a normalized solution.
    ``analytic`` scenarios sample their oracle instead of solving.
    """

    name: str
    description: str
    n: int
    coefficients: Callable[[int], EllipticCoefficients]
    manifold: Callable[[], ThinManifold]
    obstacle: Callable[[np.ndarray], np.ndarray]
    dirichlet: Callable[[np.ndarray], np.ndarray]
    oracle: Optional[OracleField] = None
    analytic: bool = False
    odd_mode: bool = False
    default_m: int = 257
    expected: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)  # overrides of the diagnostic defaults

    def problem(self, grid: Grid, odd: float = 0.0) -> ProblemSpec:
        if grid.n != self.n:
            raise ValueError(f"scenario {self.name} is {self.n}-dimensional, grid is {grid.n}-dimensional")
        manifold = self.manifold()
        base = self.dirichlet
        if odd:
            def dirichlet(x, base=base, manifold=manifold, odd=odd):
                x = np.asarray(x, dtype=float)
                return base(x) + odd * (x[..., -1] - manifold.height(x[..., :-1]))
        else:
            dirichlet = base
        return ProblemSpec(
            grid=grid,
            coefficients=self.coefficients(self.n),
            manifold=manifold,
            obstacle=self.obstacle,
            dirichlet=dirichlet,
        )


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


def _straightened(oracle: OracleField, c: float):
    """The oracle in coordinates flattening ``x_n = c |x'|^2``."""

    def data(x):
        y = np.array(x, dtype=float, copy=True)
        y[..., -1] -= c * np.sum(y[..., :-1] ** 2, axis=-1)
        return oracle(y)

    return data


_O2 = exact_signorini_2d()
_O3 = exact_signorini_3d()
_TENT = tent_1d(1.0)

_GROWTH = {"sup_exponent": (1.40, 1.55), "degree": 1.5}

REGISTRY: dict[str, ScenarioSpec] = {}


def _register(s: ScenarioSpec) -> None:
    REGISTRY[s.name] = s


_register(
    ScenarioSpec(
        name="tent-1d",
        description="1D point obstacle u(0) >= 1, zero boundary data; exact tent solution",
        n=1,
        coefficients=identity_coefficients,
        manifold=flat_manifold,
        obstacle=lambda x: np.ones(np.shape(x)[:-1]),
        dirichlet=_zero,
        oracle=_TENT,
        default_m=129,
        expected={"max_error": 1e-8},
    )
)
_register(
    ScenarioSpec(
        name="oracle-3half-2d",
        description="degree-3/2 global solution Re((x1 + i|x2|)^{3/2}) sampled analytically (no solve)",
        n=2,
        coefficients=identity_coefficients,
        manifold=flat_manifold,
        obstacle=_zero,
        dirichlet=_O2,
        oracle=_O2,
        analytic=True,
        expected={"frequency": 4.0, "F_exponent": 4.0, "degree": 1.5},
    )
)
_register(
    ScenarioSpec(
        name="flat-oracle-2d",
        description="flat M, zero obstacle, a = I, Dirichlet data = degree-3/2 oracle trace",
        n=2,
        coefficients=identity_coefficients,
        manifold=flat_manifold,
        obstacle=_zero,
        dirichlet=_O2,
        oracle=_O2,
        expected={**_GROWTH, "frequency": 4.0},
    )
)
_register(
    ScenarioSpec(
        name="curved-M-2d",
        description="M = {x2 = 0.2 x1^2}, a = I + 0.1 sine perturbation (a(0) = I), zero obstacle, "
        "straightened oracle data with tuned odd mode",
        n=2,
        coefficients=lambda n: sine_perturbed_coefficients(n, 0.1),
        manifold=lambda: parabolic_manifold(0.2),
        obstacle=_zero,
        dirichlet=_straightened(_O2, 0.2),
        odd_mode=True,
        expected={**_GROWTH, "frequency": 4.0},
    )
)
_register(
    ScenarioSpec(
        name="varcoef-2d",
        description="flat M, a = I + 0.1 sine perturbation with 0.05 mixed term (a(0) = I), zero obstacle, "
        "oracle data with tuned odd mode",
        n=2,
        coefficients=lambda n: sine_perturbed_coefficients(n, 0.1, mixed=0.05),
        manifold=flat_manifold,
        obstacle=_zero,
        dirichlet=_O2,
        odd_mode=True,
        expected={**_GROWTH, "frequency": 4.0},
    )
)
_register(
    ScenarioSpec(
        name="flat-3d",
        description="3D flat M, zero obstacle, a = I, data = 2D oracle in (x1, x3) extended in x2",
        n=3,
        coefficients=identity_coefficients,
        manifold=flat_manifold,
        obstacle=_zero,
        dirichlet=_O3,
        oracle=_O3,
        default_m=129,
        expected={**_GROWTH, "frequency": 5.0},
        diagnostics={"count": 14, "sup_window": (0.1, 0.6), "blowup_depth": 1},
    )
)


def get_scenario(name: str) -> ScenarioSpec:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(REGISTRY)}") from None


def list_scenarios(filter: str = "", verbose: bool = False) -> list[str]:
    """One line per registry entry in registration order."""
    lines = []
    for name, s in REGISTRY.items():
        if filter and filter not in name:
            continue
        line = f"{name:18s} n={s.n}  {s.description}"
        if verbose and s.expected:
            exp = ", ".join(f"{k}={v}" for k, v in s.expected.items())
            line += f"\n{'':18s} expected: {exp}"
        lines.append(line)
    return lines
