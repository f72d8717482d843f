"""The acceptance criteria AC1 to AC10 with pinned configurations."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Iterable, Optional

import numpy as np
import scipy.sparse as sp

from .assembly import LCPSystem
from .blowup import blowup_sequence, exact_signorini_2d, homogeneity_degree, verify_signorini_oracle
from .config import DiagnosticsConfig
from .frequency import (
    RegularityParams,
    almost_monotonicity_check,
    compute_profile,
    decay_fit_F,
    decay_fit_sup,
    mean_value_decay,
    scaling_identity_check,
)
from .grid import Grid, GridFunction
from .runner import Solution, contact_hausdorff, solve_scenario, truncated_branch_exact
from .scenarios import get_scenario
from .solver import SolverConfig, lcp_by_enumeration, psor_solve


@dataclass(frozen=True)
class CriterionResult:
    id: str
    title: str
    passed: bool
    detail: str
    seconds: float
    budget: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.id} {self.title}: {self.detail} ({self.seconds:.2f} s)"


@dataclass(frozen=True)
class Criterion:
    id: str
    title: str
    tags: tuple
    budget: float  # seconds
    run: Callable[[], tuple]

    def __call__(self) -> CriterionResult:
        t0 = time.perf_counter()
        try:
            ok, detail = self.run()
        except Exception as exc:  # a crash is a failure of the criterion, not of the runner
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        if ok and dt > self.budget:
            ok, detail = False, f"{detail}; runtime {dt:.1f} s exceeds budget {self.budget:g} s"
        return CriterionResult(self.id, self.title, bool(ok), detail, dt, self.budget)


ORACLE_M = 257
TENT_M = 129
SOLVE_M = 257
MONO = RegularityParams(alpha=0.45, beta=1.0, eps0=0.4, C_max=1.0)
MONO_DELTA = RegularityParams(alpha=0.45, beta=1.0, eps0=0.2, delta0=0.2, C_max=1.0)
PROFILE = dict(r_max=0.5, rho=0.85, count=20, q=720)


@lru_cache(maxsize=None)
def pinned_solution(name: str, m: int = SOLVE_M) -> Solution:
    scn = get_scenario(name)
    sol = solve_scenario(scn, Grid(scn.n, 1.0, m), SolverConfig())
    if not sol.converged:
        raise RuntimeError(f"{name}: PSOR did not converge")
    return sol


def clear_cache() -> None:
    pinned_solution.cache_clear()


def _f(x) -> str:
    return f"{x:.6g}"


def ac1():
    v = verify_signorini_oracle(exact_signorini_2d(), count=1000, seed=0)
    return v.passed, (
        f"harmonic residual {_f(v.harmonic_residual)} <= 1e-08, min trace {_f(v.min_trace)}, "
        f"complementarity {_f(v.complementarity)}, max jump on contact {_f(v.max_jump_on_contact)}"
    )


def ac2():
    oracle = exact_signorini_2d()
    grid = Grid(2, 1.0, ORACLE_M)
    p = compute_profile(oracle, n=2, **PROFILE)
    w = p.window(0.1, 0.5)
    dev = float(np.max(np.abs(p.phi[w] - 4.0)))
    fit = decay_fit_F(p)
    # the same pipeline through the grid interpolant
    ps = compute_profile(oracle.sample(grid), **PROFILE)
    dev_s = float(np.max(np.abs(ps.phi[ps.window(0.1, 0.5)] - 4.0)))
    ok = dev <= 0.05 and abs(fit.exponent - 4.0) <= 0.05 and dev_s <= 0.05
    return ok, f"max |Phi - 4| = {_f(dev)} (grid-sampled {_f(dev_s)}) <= 0.05, mu = {_f(fit.exponent)} = 4 +- 0.05"


def ac3():
    scn = get_scenario("tent-1d")
    grid = Grid(1, 1.0, TENT_M)
    sol = solve_scenario(scn, grid, SolverConfig(), continuation=False)
    err = float(np.max(np.abs(sol.field.values - scn.oracle.sample(grid).values)))
    comp = sol.report.complementarity
    return err <= 1e-8 and comp <= 1e-10 and sol.converged, f"max node error {_f(err)} <= 1e-08, complementarity {_f(comp)} <= 1e-10"


def ac4():
    sol = pinned_solution("flat-oracle-2d")
    h = sol.field.grid.h
    fit = decay_fit_sup(sol.field, (0.05, 0.4), center=sol.center)
    dist = contact_hausdorff(sol)
    ok = 1.40 <= fit.exponent <= 1.55 and dist <= 2 * h + 1e-12
    return ok, f"sup exponent {_f(fit.exponent)} in [1.40, 1.55], contact Hausdorff {_f(dist)} <= 2h = {_f(2 * h)}"


def ac5():
    sol = pinned_solution("curved-M-2d")
    p = compute_profile(sol.field, center=sol.center, **PROFILE)
    rep = almost_monotonicity_check(p, MONO, slack=0.05)
    ok = rep.passed and rep.max_drop_excess <= 0
    return ok, f"C_min = {_f(rep.C_min)} <= {_f(rep.C_max)}, drop excess {_f(rep.max_drop_excess)} <= 0 (eps0 = 0.4, slack 0.05)"


def ac6():
    parts, ok = [], True
    for name in ("flat-oracle-2d", "curved-M-2d"):
        sol = pinned_solution(name)
        d = DiagnosticsConfig()
        bs = blowup_sequence(sol.field, d.blowup_r0, d.blowup_depth, center=sol.center)
        freq = float(bs.frequencies[-1])
        deg = homogeneity_degree(bs.limit, (0.25, 0.9), 10, rescaled=True).degree
        ok &= freq >= 4 - 0.15 and 1.4 <= deg <= 1.6
        parts.append(f"{name}: frequency {_f(freq)} >= 3.85, degree {_f(deg)} in [1.4, 1.6]")
    return ok, "; ".join(parts)


def ac7():
    sol = pinned_solution("flat-oracle-2d")
    parts, ok = [], True
    for r in (0.1, 0.2, 0.4):
        rep = scaling_identity_check(sol.field, r, center=sol.center, rel_tol=0.02)
        ok &= rep.passed
        parts.append(f"r={r}: {_f(rep.lhs)} vs {_f(rep.rhs)}")
    return ok, ", ".join(parts) + " (tolerance 0.02 Phi)"


def ac8():
    sol = pinned_solution("flat-oracle-2d")
    h = sol.field.grid.h
    taus = np.geomspace(4 * h, 0.2, 10)
    fit = mean_value_decay(sol.field, sol.center, taus)
    return fit.exponent >= 2.7, f"slope {_f(fit.exponent)} >= 2.7 at x0 = {sol.center.tolist()}"


def random_m_matrix_lcp(rng: np.random.Generator, size: int, k: int) -> LCPSystem:
    """Strictly diagonally dominant symmetric M-matrix with ``k`` constrained unknowns."""
    off = np.triu(rng.uniform(0.0, 1.0, (size, size)) * (rng.uniform(size=(size, size)) < 0.5), 1)
    off = off + off.T
    diag = off.sum(axis=1) + rng.uniform(0.1, 1.0, size)
    A = sp.csr_matrix(np.diag(diag) - off)
    K = np.sort(rng.choice(size, size=k, replace=False))
    return LCPSystem(A=A, b=rng.normal(size=size), constrained=K, psi=rng.normal(size=k))


def ac9(count: int = 50, seed: int = 20240601):
    rng = np.random.default_rng(seed)
    cfg = SolverConfig(omega=1.3, tol_c=1e-13, tol_r=1e-13, check_every=1, record_energy=True)
    worst_err, worst_rise, worst_cmp = 0.0, -np.inf, -np.inf
    for _ in range(count):
        size = int(rng.integers(4, 15))
        sys = random_m_matrix_lcp(rng, size, int(rng.integers(1, min(size, 12) + 1)))
        u, rep = psor_solve(sys, cfg)
        if not rep.converged:
            return False, "PSOR did not converge on a random system"
        ref = lcp_by_enumeration(sys)
        worst_err = max(worst_err, float(np.max(np.abs(u - ref))))
        hist = rep.energy_history
        scale = max(1.0, float(np.max(np.abs(hist))))
        worst_rise = max(worst_rise, float(np.max(np.diff(hist))) / scale)
        raised = replace(sys, psi=sys.psi + rng.uniform(0.0, 1.0, sys.psi.size))
        u2, _ = psor_solve(raised, cfg)
        worst_cmp = max(worst_cmp, float(np.max(u - u2)))
    ok = worst_err <= 1e-8 and worst_rise <= 1e-14 and worst_cmp <= 1e-9
    return ok, (
        f"{count} systems: max |PSOR - enumeration| {_f(worst_err)} <= 1e-08, "
        f"max relative energy rise {_f(worst_rise)} <= 1e-14, max (u1 - u2) {_f(worst_cmp)} <= 1e-09"
    )


def ac10():
    sol = pinned_solution("curved-M-2d")
    p = compute_profile(sol.field, center=sol.center, delta0=MONO_DELTA.delta0, **PROFILE)
    rep = almost_monotonicity_check(p, MONO_DELTA, slack=0.05)
    # a damped copy crosses the threshold r^{n+2+delta0} inside the radius range
    damped = GridFunction(sol.field.grid, 0.467 * sol.field.values)
    pt = compute_profile(damped, center=sol.center, delta0=MONO_DELTA.delta0, **PROFILE)
    exact, hits = truncated_branch_exact(pt)
    ok = rep.passed and rep.max_drop_excess <= 0 and exact and hits > 0
    return ok, (
        f"C_min = {_f(rep.C_min)}, drop excess {_f(rep.max_drop_excess)} (delta0 = 0.2, eps0 = 0.2); "
        f"truncated branch Phi = 4.2 exactly at {hits} radii"
    )


CRITERIA: tuple = (
    Criterion("AC1", "oracle self-verification", ("oracle",), 1.0, ac1),
    Criterion("AC2", "frequency pipeline exactness", ("frequency", "oracle"), 5.0, ac2),
    Criterion("AC3", "1D solver exactness", ("solver",), 1.0, ac3),
    Criterion("AC4", "optimal growth recovery", ("growth", "solver"), 120.0, ac4),
    Criterion("AC5", "almost-monotonicity", ("frequency", "monotonicity"), 180.0, ac5),
    Criterion("AC6", "blow-up lower bound", ("blowup",), 180.0, ac6),
    Criterion("AC7", "scaling identity", ("frequency", "scaling"), 120.0, ac7),
    Criterion("AC8", "mean-value decay", ("meanvalue",), 120.0, ac8),
    Criterion("AC9", "LCP solver properties", ("solver",), 10.0, ac9),
    Criterion("AC10", "delta0-variant monotonicity", ("frequency", "monotonicity"), 180.0, ac10),
)


def select(only: Optional[str] = None) -> list:
    if not only:
        return list(CRITERIA)
    keys = {k.strip() for k in only.split(",") if k.strip()}
    chosen = [c for c in CRITERIA if c.id in keys or keys & set(c.tags)]
    if not chosen:
        tags = sorted({t for c in CRITERIA for t in c.tags})
        raise ValueError(f"--only={only} matches no criterion; tags: {', '.join(tags)}")
    return chosen


def summary_table(results: Iterable[CriterionResult]) -> str:
    results = list(results)
    rows = [f"{'id':5s} {'status':6s} {'time/s':>8s} {'budget/s':>9s}  title"]
    for r in results:
        rows.append(f"{r.id:5s} {'PASS' if r.passed else 'FAIL':6s} {r.seconds:8.2f} {r.budget:9.0f}  {r.title}")
    passed = sum(r.passed for r in results)
    rows.append(f"{passed}/{len(results)} criteria passed")
    return "\n".join(rows)


def run_acceptance(only: Optional[str] = None, echo: Callable[[str], None] = print) -> int:
    """Run the selected criteria; 0 when all pass, 4 otherwise."""
    results = []
    for c in select(only):
        res = c()
        results.append(res)
        echo(res.line())
    echo(summary_table(results))
    return 0 if all(r.passed for r in results) else 4
