"""INI experiment configuration with line-anchored validation errors."""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .frequency import FrequencyError, RegularityParams
from .grid import Grid, GridError
from .scenarios import REGISTRY, get_scenario
from .solver import SolverConfig

CHECKS = (
    "exact",
    "oracle",
    "phi",
    "fdecay",
    "sup",
    "contact",
    "monotonicity",
    "delta",
    "blowup",
    "scaling",
    "meanvalue",
)

_SECTIONS = ("experiment", "grid", "solver", "diagnostics")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with ``path:line:``."""


@dataclass(frozen=True)
class DiagnosticsConfig:
    r_max: float = 0.5
    rho: float = 0.85
    count: int = 20
    q: Optional[int] = None
    alpha: float = 0.45
    beta: float = 1.0
    eps0: float = 0.4
    delta0: float = 0.2
    delta_eps0: float = 0.2
    C_max: float = 1.0
    slack: float = 0.05
    phi_window: tuple = (0.1, 0.4)
    phi_tol: float = 0.05
    fit_window: tuple = (0.05, 0.4)
    fit_tol: float = 0.05
    sup_window: tuple = (0.05, 0.4)
    sup_range: tuple = (1.40, 1.55)
    contact_tol: float = 2.0  # in units of h
    blowup_r0: float = 0.4
    blowup_depth: int = 2
    blowup_margin: float = 0.15
    degree_range: tuple = (1.4, 1.6)
    scaling_radii: tuple = (0.1, 0.2, 0.4)
    scaling_tol: float = 0.02
    tau_min: float = 4.0  # in units of h
    tau_max: float = 0.2
    tau_count: int = 10
    mean_value_min: float = 2.7
    checks: tuple = ()  # empty: scenario default

    def params(self) -> RegularityParams:
        return RegularityParams(self.alpha, self.beta, self.eps0, 0.0, self.C_max)

    def delta_params(self) -> RegularityParams:
        return RegularityParams(self.alpha, self.beta, self.delta_eps0, self.delta0, self.C_max)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    n: int
    L: float
    m: int
    solver: SolverConfig = field(default_factory=SolverConfig)
    auto_omega: bool = True
    continuation: bool = True
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    output: Path = Path("out")
    seed: int = 0

    @property
    def grid(self) -> Grid:
        return Grid(self.n, self.L, self.m)


SCENARIO_CHECKS = {
    "tent-1d": ("exact",),
    "oracle-3half-2d": ("oracle", "phi", "fdecay"),
}
FULL_CHECKS = ("phi", "fdecay", "sup", "contact", "monotonicity", "delta", "blowup", "scaling", "meanvalue")


def default_checks(scenario: str) -> tuple:
    return SCENARIO_CHECKS.get(scenario, FULL_CHECKS)


def _key_lines(text: str) -> dict:
    lines = {}
    section = None
    for no, line in enumerate(text.splitlines(), 1):
        s = re.match(r"^\s*\[([^\]]+)\]", line)
        if s:
            section = s.group(1).strip()
            lines[(section, None)] = no
            continue
        k = re.match(r"^([^\s=:#;][^=:]*?)\s*[=:]", line)
        if k and section is not None:
            lines[(section, k.group(1).strip())] = no
    return lines


class _Reader:
    def __init__(self, path: str, text: str):
        self.path = path
        self.lines = _key_lines(text)
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text, source=path)
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            if line is None:
                errs = getattr(exc, "errors", None)
                line = errs[0][0] if errs else 1
            raise ConfigError(f"{path}:{line}: {exc.message.splitlines()[0]}") from None
        self.cp = cp
        self.used = set()

    def where(self, section, key=None) -> str:
        line = self.lines.get((section, key), self.lines.get((section, None), 1))
        return f"{self.path}:{line}"

    def fail(self, section, key, msg):
        raise ConfigError(f"{self.where(section, key)}: {msg}")

    def raw(self, section, key):
        if self.cp.has_section(section) and self.cp.has_option(section, key):
            self.used.add((section, key))
            return self.cp.get(section, key).strip()
        return None

    def get(self, section, key, conv, default):
        raw = self.raw(section, key)
        if raw is None:
            return default
        try:
            return conv(raw)
        except ValueError as exc:
            self.fail(section, key, f"{key} = {raw}: {exc}")

    def leftovers(self):
        for section in self.cp.sections():
            if section not in _SECTIONS:
                self.fail(section, None, f"unknown section [{section}]; expected one of {', '.join(_SECTIONS)}")
            for key in self.cp.options(section):
                if (section, key) not in self.used:
                    self.fail(section, key, f"unknown key {key!r} in [{section}]")


def _bool(s: str) -> bool:
    v = s.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _floats(count: Optional[int] = None):
    def conv(s: str) -> tuple:
        parts = [p for p in re.split(r"[,\s]+", s) if p]
        vals = tuple(float(p) for p in parts)
        if count is not None and len(vals) != count:
            raise ValueError(f"expected {count} numbers")
        return vals

    return conv


def _checks(s: str) -> tuple:
    if s.lower() == "auto":
        return ()
    names = tuple(p.lower() for p in re.split(r"[,\s]+", s) if p)
    bad = [c for c in names if c not in CHECKS]
    if bad:
        raise ValueError(f"unknown checks {bad}; known: {', '.join(CHECKS)}")
    return names


def load_config(path) -> ExperimentConfig:
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}:0: cannot read config: {exc.strerror}") from None
    return parse_config(text, path)


def parse_config(text: str, path: str = "<config>") -> ExperimentConfig:
    rd = _Reader(path, text)
    E, G, S, D = _SECTIONS

    name = rd.raw(E, "scenario")
    if name is None:
        rd.fail(E, None, "[experiment] needs a scenario")
    if name not in REGISTRY:
        rd.fail(E, "scenario", f"scenario = {name}: unknown scenario; known: {', '.join(REGISTRY)}")
    scn = get_scenario(name)
    output = Path(rd.get(E, "output", str, f"out/{name}"))
    seed = rd.get(E, "seed", int, 0)

    n = rd.get(G, "n", int, scn.n)
    if n != scn.n:
        rd.fail(G, "n", f"n = {n} does not match scenario {name} (n = {scn.n})")
    L = rd.get(G, "L", float, 1.0)
    m = rd.get(G, "m", int, scn.default_m)
    try:
        Grid(n, L, m)
    except GridError as exc:
        rd.fail(G, "m" if "m" in str(exc) else "L", str(exc))

    omega_raw = rd.raw(S, "omega")
    auto_omega = omega_raw is None or omega_raw.lower() == "auto"
    kw = {}
    if not auto_omega:
        kw["omega"] = rd.get(S, "omega", float, 1.5)
    for key, conv in (("max_sweeps", int), ("tol_c", float), ("tol_r", float), ("check_every", int)):
        v = rd.get(S, key, conv, None)
        if v is not None:
            kw[key] = v
    backend = rd.get(S, "backend", str, "auto")
    if backend != "auto":
        kw["backend"] = backend
    continuation = rd.get(S, "continuation", _bool, True)
    try:
        solver = SolverConfig(**kw)
    except ValueError as exc:
        msg = str(exc)
        key = next((k for k in ("omega", "tol", "max_sweeps", "backend") if k in msg), None)
        key = {"tol": "tol_c"}.get(key, key)
        rd.fail(S, key, msg)

    d = {}
    conv = {
        "r_max": float, "rho": float, "count": int, "q": int, "alpha": float, "beta": float,
        "eps0": float, "delta0": float, "delta_eps0": float, "C_max": float, "slack": float,
        "phi_window": _floats(2), "phi_tol": float, "fit_window": _floats(2), "fit_tol": float,
        "sup_window": _floats(2), "sup_range": _floats(2), "contact_tol": float,
        "blowup_r0": float, "blowup_depth": int, "blowup_margin": float, "degree_range": _floats(2),
        "scaling_radii": _floats(), "scaling_tol": float, "tau_min": float, "tau_max": float,
        "tau_count": int, "mean_value_min": float, "checks": _checks,
    }
    for f in fields(DiagnosticsConfig):
        v = rd.get(D, f.name, conv[f.name], None)
        if v is not None:
            d[f.name] = v
    diag = DiagnosticsConfig(**{**scn.diagnostics, **d})
    rd.leftovers()
    cfg = ExperimentConfig(name, n, L, m, solver, auto_omega, continuation, diag, output, seed)
    validate(cfg, rd)
    return cfg


def validate(cfg: ExperimentConfig, rd: Optional[_Reader] = None) -> None:
    """Check the invariants that cross parameters; raise :class:`ConfigError`."""

    def fail(key, msg, *alternatives):
        if rd is None:
            raise ConfigError(f"<config>: {msg}")
        # anchor on the first candidate key the file actually sets ("section.key" or a diagnostics key)
        section = "diagnostics"
        for k in (key,) + alternatives:
            sec, _, name = k.rpartition(".")
            if (sec or "diagnostics", name) in rd.lines:
                section, key = sec or "diagnostics", name
                break
        rd.fail(section, key, msg)

    d = cfg.diagnostics
    grid = cfg.grid
    if not 0.5 < d.rho < 1.0:
        fail("rho", f"rho = {d.rho} violates 0.5 < rho < 1")
    if d.count < 8:
        fail("count", f"count = {d.count} violates count >= 8")
    if not 0 < d.r_max <= 0.9 * cfg.L:
        fail("r_max", f"r_max = {d.r_max} violates 0 < r_max <= 0.9 L = {0.9 * cfg.L}")
    if d.q is not None:
        qmin = {1: 2, 2: 16, 3: 64}[cfg.n]
        if d.q < qmin:
            fail("q", f"q = {d.q} violates q >= {qmin} for n = {cfg.n}")
    try:
        d.params()
    except FrequencyError as exc:
        key = "eps0" if "epsilon0" in str(exc) else ("alpha" if "alpha" in str(exc) else "beta")
        fail(key, str(exc), "eps0", "alpha", "beta")
    if "delta" in (d.checks or default_checks(cfg.scenario)):
        try:
            d.delta_params()
        except FrequencyError as exc:
            fail("delta0", str(exc), "delta_eps0", "alpha", "beta")
    for key in ("phi_window", "fit_window", "sup_window", "sup_range", "degree_range"):
        lo, hi = getattr(d, key)
        if not 0 < lo < hi:
            fail(key, f"{key} = {lo}, {hi} violates 0 < lo < hi")
    for key in ("phi_window", "fit_window", "sup_window"):
        if getattr(d, key)[1] > 0.9 * cfg.L:
            fail(key, f"{key} upper end exceeds 0.9 L")
    if d.slack < 0:
        fail("slack", "slack must be nonnegative")
    if any(r <= 0 for r in d.scaling_radii) or any(r / 0.9 > 0.9 * cfg.L for r in d.scaling_radii):
        fail("scaling_radii", "scaling radii must lie in (0, 0.81 L]")
    active = d.checks or default_checks(cfg.scenario)
    if d.blowup_depth < 0:
        fail("blowup_depth", "blowup_depth must be nonnegative")
    if d.blowup_r0 > 0.45 * cfg.L:
        fail("blowup_r0", f"blowup_r0 = {d.blowup_r0} exceeds 0.45 L")
    deepest = d.blowup_r0 * 2.0 ** -d.blowup_depth
    if "blowup" in active and deepest < 8 * grid.h:
        fail(
            "blowup_depth",
            f"resolution floor: deepest blow-up radius {deepest:.4g} is below 8 h = {8 * grid.h:.4g}",
            "blowup_r0",
            "grid.m",
        )
    r_min = d.r_max * d.rho ** (d.count - 1)
    if any(k in active for k in ("phi", "fdecay", "monotonicity", "delta")) and r_min < 2 * grid.h:
        fail(
            "count",
            f"resolution floor: smallest profile radius r_max * rho^(count-1) = {r_min:.4g} is below 2 h = {2 * grid.h:.4g}",
            "r_max",
            "rho",
            "grid.m",
        )
    if d.tau_min < 1.0:
        fail("tau_min", f"resolution floor: tau_min = {d.tau_min} h is below one cell")
    if "meanvalue" in active and not d.tau_min * grid.h < d.tau_max:
        fail("tau_max", f"tau_max = {d.tau_max} must exceed tau_min * h = {d.tau_min * grid.h:.4g}")
    if d.tau_count < 5:
        fail("tau_count", "tau_count must be at least 5")


def with_output(cfg: ExperimentConfig, output) -> ExperimentConfig:
    return replace(cfg, output=Path(output))
