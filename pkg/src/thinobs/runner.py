"""Scenario solving and the diagnostic checks behind ``thinobs run``."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import artifacts
from .assembly import LCPSystem, assemble_lcp
from .blowup import blowup_sequence, homogeneity_degree, verify_signorini_oracle
from .config import ExperimentConfig, default_checks
from .frequency import (
    FrequencyError,
    almost_monotonicity_check,
    compute_profile,
    decay_fit_F,
    decay_fit_sup,
    mean_value_decay,
    scaling_identity_check,
)
from .grid import Grid, GridFunction
from .scenarios import ScenarioSpec, get_scenario
from .solver import SolverConfig, SolveReport, optimal_omega, prolongate, psor_solve

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CRITERION = 0, 2, 3, 4


@dataclass
class Solution:
    scenario: ScenarioSpec
    field: GridFunction
    system: Optional[LCPSystem]
    report: Optional[SolveReport]
    center: np.ndarray
    odd: float = 0.0
    calibration: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def converged(self) -> bool:
        return self.report is None or self.report.converged


def free_boundary_nodes(sys: LCPSystem, u: GridFunction) -> np.ndarray:
    """Contact nodes with a non-contact constrained neighbour along the manifold (flat indices)."""
    grid = sys.grid
    nodes = sys.constrained_nodes()
    gap = sys.from_field(u)[sys.constrained] - sys.psi
    touch = gap <= 0.0
    if grid.n == 1 or nodes.size == 0:
        return nodes[touch]
    tang = np.stack(np.unravel_index(nodes, grid.shape)[:-1], axis=1)
    state = {tuple(t): bool(c) for t, c in zip(tang, touch)}
    fb = []
    for k, (t, c) in enumerate(zip(tang, touch)):
        if not c:
            continue
        for ax in range(grid.n - 1):
            for s in (-1, 1):
                nb = t.copy()
                nb[ax] += s
                if state.get(tuple(nb)) is False:
                    fb.append(nodes[k])
                    break
            else:
                continue
            break
    return np.asarray(fb, dtype=np.intp)


def free_boundary_center(sys: LCPSystem, u: GridFunction) -> np.ndarray:
    """Grid position of the free-boundary node nearest the origin (origin if there is none)."""
    grid = sys.grid
    fb = free_boundary_nodes(sys, u)
    if fb.size == 0:
        return np.zeros(grid.n)
    pts = grid.points()[fb]
    k = int(np.argmin(np.sum(pts**2, axis=1)))  # argmin keeps the lowest index on ties
    return pts[k].copy()


def normal_slope(u: GridFunction, center: np.ndarray) -> float:
    """Centred difference of ``u`` in ``x_n`` at the node ``center``."""
    grid = u.grid
    idx = np.rint((center + grid.L) / grid.h).astype(int)
    up, dn = idx.copy(), idx.copy()
    up[-1] += 1
    dn[-1] -= 1
    a = u.as_array()
    return float((a[tuple(up)] - a[tuple(dn)]) / (2 * grid.h))


def _levels(m: int, coarsest: int = 17) -> list[int]:
    ms = [m]
    while (ms[-1] - 1) % 2 == 0 and (ms[-1] - 1) // 2 + 1 >= coarsest:
        ms.append((ms[-1] - 1) // 2 + 1)
    return ms[::-1]


def _solve_level(scn, grid, solver, auto_omega, odd, u0):
    cfg = replace(solver, omega=optimal_omega(grid)) if auto_omega else solver
    sys = assemble_lcp(scn.problem(grid, odd))
    u, rep = psor_solve(sys, cfg, u0)
    return sys, u, rep


def solve_scenario(
    scn: ScenarioSpec,
    grid: Grid,
    solver: SolverConfig = SolverConfig(),
    auto_omega: bool = True,
    continuation: bool = True,
    odd_tol: float = 1e-8,
    odd_iters: int = 6,
) -> Solution:
    """Solve on ``grid`` (coarse-to-fine warm starts when ``continuation``).

    For ``odd_mode`` scenarios the coefficient of the odd Dirichlet mode is
    tuned by secant iteration until the normal slope at the free-boundary
    node nearest the origin vanishes.
    """
    t0 = time.perf_counter()
    if scn.analytic:
        u = scn.oracle.sample(grid)
        return Solution(scn, u, None, None, np.zeros(grid.n), seconds=time.perf_counter() - t0)
    u = None
    levels = _levels(grid.m) if continuation else [grid.m]
    for m in levels[:-1]:
        coarse = Grid(grid.n, grid.L, m)
        _, uc, _ = _solve_level(scn, coarse, solver, auto_omega, 0.0, None if u is None else prolongate(u, coarse))
        u = uc
    u0 = None if u is None else prolongate(u, grid)
    sys, u, rep = _solve_level(scn, grid, solver, auto_omega, 0.0, u0)
    center = free_boundary_center(sys, u)
    odd, history = 0.0, []
    if scn.odd_mode and rep.converged:
        s0 = normal_slope(u, center)
        history.append((0.0, s0))
        t_prev, s_prev = 0.0, s0
        t = -s0
        for _ in range(odd_iters):
            sys, u, rep = _solve_level(scn, grid, solver, auto_omega, t, u)
            if not rep.converged:
                break
            center = free_boundary_center(sys, u)
            s = normal_slope(u, center)
            history.append((t, s))
            if abs(s) <= odd_tol or s == s_prev:
                break
            t, t_prev, s_prev = t - s * (t - t_prev) / (s - s_prev), t, s
        odd = t
    return Solution(scn, u, sys, rep, center, odd, history, time.perf_counter() - t0)


@dataclass(frozen=True)
class Check:
    criterion: str
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.criterion} {self.name}: {self.detail}"


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 or len(b) == 0:
        return 0.0 if len(a) == len(b) else float("inf")
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))


def contact_hausdorff(sol: Solution) -> float:
    """Distance between the computed contact nodes and the constrained nodes with ``x1 <= 0``."""
    sys = sol.system
    pts = sys.grid.points()
    nodes = sys.constrained_nodes()
    gap = sys.from_field(sol.field)[sys.constrained] - sys.psi
    computed = pts[nodes[gap <= 0.0]]
    expected = pts[nodes[pts[nodes, 0] <= 1e-12]]
    return hausdorff(computed, expected)


@dataclass
class Outcome:
    checks: list
    profile: object = None
    fits: list = field(default_factory=list)


def run_checks(cfg: ExperimentConfig, sol: Solution, names: Optional[tuple] = None) -> Outcome:
    d = cfg.diagnostics
    grid = sol.field.grid
    n = grid.n
    scn = sol.scenario
    names = names or d.checks or default_checks(scn.name)
    target = scn.expected.get("frequency", n + 2.0)
    c = sol.center
    q = d.q
    src = scn.oracle if scn.analytic else sol.field
    out = Outcome([])
    add = out.checks.append

    def guarded(criterion, name, fn):
        try:
            fn()
        except FrequencyError as exc:
            add(Check(criterion, name, False, f"error: {exc}"))

    profile = compute_profile(src, d.r_max, d.rho, d.count, q=q, center=c, n=n)
    out.profile = profile

    if "exact" in names:
        err = float(np.max(np.abs(sol.field.values - scn.oracle.sample(grid).values)))
        tol = scn.expected.get("max_error", 1e-8)
        add(Check("AC3", "max node error", err <= tol, f"{_fmt(err)} <= {_fmt(tol)}"))
        comp = sol.report.complementarity
        add(Check("AC3", "complementarity residual", comp <= 1e-10, f"{_fmt(comp)} <= 1e-10"))

    if "oracle" in names:
        v = verify_signorini_oracle(seed=cfg.seed)
        add(Check("AC1", "oracle self-verification", v.passed, f"harmonic residual {_fmt(v.harmonic_residual)}"))

    if "phi" in names:
        w = profile.window(*d.phi_window)
        dev = float(np.max(np.abs(profile.phi[w] - target))) if np.any(w) else float("inf")
        add(Check("AC2", "Phi profile", dev <= d.phi_tol,
                  f"max |Phi - {_fmt(target)}| = {_fmt(dev)} <= {_fmt(d.phi_tol)} on r in [{d.phi_window[0]}, {d.phi_window[1]}]"))

    if "fdecay" in names:
        def fdecay():
            fit = decay_fit_F(profile, d.fit_window)
            out.fits.append(fit)
            add(Check("AC2", "F decay exponent", abs(fit.exponent - target) <= d.fit_tol,
                      f"{_fmt(fit.exponent)} = {_fmt(target)} +- {_fmt(d.fit_tol)}"))
        guarded("AC2", "F decay exponent", fdecay)

    if "sup" in names:
        def sup():
            fit = decay_fit_sup(sol.field, d.sup_window, center=c)
            out.fits.append(fit)
            lo, hi = d.sup_range
            add(Check("AC4", "sup-decay exponent", lo <= fit.exponent <= hi, f"{_fmt(fit.exponent)} in [{lo}, {hi}]"))
        guarded("AC4", "sup-decay exponent", sup)

    if "contact" in names:
        dist = contact_hausdorff(sol)
        tol = d.contact_tol * grid.h
        add(Check("AC4", "contact set vs half-line", dist <= tol + 1e-12,
                  f"Hausdorff {_fmt(dist)} <= {_fmt(d.contact_tol)} h = {_fmt(tol)}"))

    if "monotonicity" in names:
        rep = almost_monotonicity_check(profile, d.params(), d.slack)
        ok = rep.passed and rep.max_drop_excess <= 0
        add(Check("AC5", "almost-monotonicity", ok,
                  f"C_min = {_fmt(rep.C_min)} <= {_fmt(rep.C_max)}, drop excess {_fmt(rep.max_drop_excess)} <= 0"))

    if "delta" in names:
        prm = d.delta_params()
        pd = compute_profile(src, d.r_max, d.rho, d.count, q=q, center=c, delta0=prm.delta0, n=n)
        rep = almost_monotonicity_check(pd, prm, d.slack)
        ok = rep.passed and rep.max_drop_excess <= 0
        add(Check("AC10", "delta0-variant almost-monotonicity", ok,
                  f"delta0 = {prm.delta0}, C_min = {_fmt(rep.C_min)}, drop excess {_fmt(rep.max_drop_excess)}"))
        exact = truncated_branch_exact(pd)
        add(Check("AC10", "delta0-variant truncated branch", exact[0],
                  f"{exact[1]} interior truncated radii with Phi = {_fmt(pd.truncation_exponent)} exactly"))

    if "blowup" in names:
        def blowup():
            bs = blowup_sequence(sol.field, d.blowup_r0, d.blowup_depth, q=q, center=c)
            freq = float(bs.frequencies[-1])
            est = homogeneity_degree(bs.limit, (0.25, 0.9), 10, q=q, rescaled=True)
            out.fits.append(replace(est.fit, name="blowup_degree"))
            lo, hi = d.degree_range
            add(Check("AC6", "blow-up frequency", freq >= n + 2 - d.blowup_margin,
                      f"{_fmt(freq)} >= {_fmt(n + 2 - d.blowup_margin)} at r = {_fmt(bs.radii[-1])}"))
            add(Check("AC6", "blow-up homogeneity degree", lo <= est.degree <= hi, f"{_fmt(est.degree)} in [{lo}, {hi}]"))
        guarded("AC6", "blow-up", blowup)

    if "scaling" in names:
        for r in d.scaling_radii:
            rep = scaling_identity_check(sol.field, r, q=q, center=c, rel_tol=d.scaling_tol)
            add(Check("AC7", f"scaling identity r={r}", rep.passed,
                      f"|{_fmt(rep.lhs)} - {_fmt(rep.rhs)}| <= {_fmt(rep.tolerance)}"))

    if "meanvalue" in names:
        def meanvalue():
            taus = np.geomspace(d.tau_min * grid.h, d.tau_max, d.tau_count)
            fit = mean_value_decay(sol.field, c, taus)
            out.fits.append(fit)
            add(Check("AC8", "mean-value decay slope", fit.exponent >= d.mean_value_min,
                      f"{_fmt(fit.exponent)} >= {_fmt(d.mean_value_min)}"))
        guarded("AC8", "mean-value decay", meanvalue)
    return out


def truncated_branch_exact(profile) -> tuple[bool, int]:
    """Where both stencil neighbours are truncated the slope must equal the exponent bit for bit."""
    t = profile.truncated
    k = t.size
    both = np.array([t[max(i - 1, 0)] and t[min(i + 1, k - 1)] for i in range(k)])
    ok = bool(np.all(profile.phi[both] == profile.truncation_exponent))
    return ok, int(both.sum())


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[Path] = None) -> int:
    """Solve, check and write artifacts; returns the process exit status."""
    scn = get_scenario(cfg.scenario)
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    grid = cfg.grid
    sol = solve_scenario(scn, grid, cfg.solver, cfg.auto_omega, cfg.continuation)
    extra = {"scenario": scn.name, "center": " ".join(repr(float(v)) for v in sol.center)}
    if scn.odd_mode:
        extra["odd_mode"] = repr(float(sol.odd))
    artifacts.write_solution(out / "solution.bin", sol.field, extra)
    lines = [f"scenario {scn.name} n={grid.n} m={grid.m} L={grid.L} h={grid.h!r}"]
    if sol.report is not None:
        r = sol.report
        conv = Check("AC9", "solver convergence", r.converged,
                     f"{r.sweeps} sweeps, complementarity {_fmt(r.complementarity)}, "
                     f"dual {_fmt(r.dual_residual)}, linear {_fmt(r.linear_residual)}")
        lines.append(conv.line())
        if not r.converged:
            (out / "report.txt").write_text("\n".join(lines) + "\n")
            return EXIT_SOLVER
    outcome = run_checks(cfg, sol)
    if outcome.profile is not None:
        artifacts.write_profile(out / "profile.csv", outcome.profile)
    artifacts.write_fits(out / "fits.csv", outcome.fits)
    lines += [c.line() for c in outcome.checks]
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return EXIT_OK if all(c.passed for c in outcome.checks) else EXIT_CRITERION
