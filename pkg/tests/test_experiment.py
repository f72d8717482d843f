import re
import subprocess
import sys

import numpy as np
import pytest

from thinobs.artifacts import FITS_HEADER, PROFILE_HEADER, read_csv, read_solution
from thinobs.cli import main
from thinobs.config import ConfigError, parse_config
from thinobs.runner import free_boundary_center, solve_scenario
from thinobs.scenarios import REGISTRY, get_scenario, list_scenarios
from thinobs.grid import Grid


def write(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_registry_order_and_contents():
    names = list(REGISTRY)
    for required in ("tent-1d", "flat-oracle-2d", "curved-M-2d", "varcoef-2d", "flat-3d"):
        assert required in names
    assert names.index("tent-1d") < names.index("flat-oracle-2d") < names.index("curved-M-2d")
    assert [line.split()[0] for line in list_scenarios("")] == names


def test_list_verbose_and_filter():
    verbose = "\n".join(list_scenarios("", verbose=True))
    assert "expected: sup_exponent=(1.4, 1.55)" in verbose
    assert [l.split()[0] for l in list_scenarios("2d")] == [n for n in REGISTRY if "2d" in n]


@pytest.mark.parametrize("name", list(REGISTRY))
def test_scenarios_are_normalized(name):
    scn = get_scenario(name)
    grid = Grid(scn.n, 1.0, 9)
    spec = scn.problem(grid)
    a0 = spec.coefficients.at_origin(scn.n)
    assert np.allclose(a0, np.eye(scn.n))
    if scn.n > 1:
        spec.manifold.check_normalized(scn.n)
    assert spec.obstacle(np.zeros((1, scn.n)))[0] == 0.0 or name == "tent-1d"


def test_cli_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("tent-1d")
    assert main(["list", "--verbose", "curved"]) == 0
    out = capsys.readouterr().out
    assert "curved-M-2d" in out and "expected:" in out and "tent-1d" not in out


def test_malformed_rho_names_invariant(tmp_path, capsys):
    cfg = write(tmp_path, "[experiment]\nscenario = flat-oracle-2d\n\n[diagnostics]\nrho = 1.5\n")
    with pytest.raises(ConfigError, match=r"exp\.ini:5: rho = 1.5 violates 0.5 < rho < 1"):
        parse_config(cfg.read_text(), str(cfg))
    assert main(["run", "--config", str(cfg)]) == 2
    assert "rho = 1.5 violates" in capsys.readouterr().err


@pytest.mark.parametrize(
    "text,pattern",
    [
        ("[experiment]\nscenario = nope\n", r":2: scenario = nope: unknown scenario"),
        ("[experiment]\nscenario = tent-1d\n[grid]\nn = 2\n", r":4: n = 2 does not match"),
        ("[experiment]\nscenario = tent-1d\n[grid]\nm = 128\n", r":4: .*odd"),
        ("[experiment]\nscenario = tent-1d\n[solver]\nomega = 2.5\n", r":4: relaxation factor omega"),
        ("[experiment]\nscenario = tent-1d\n[solver]\nfoo = 1\n", r":4: unknown key 'foo'"),
        ("[experiment]\nscenario = tent-1d\n[extra]\nx = 1\n", r":3: unknown section \[extra\]"),
        ("[experiment]\nscenario = tent-1d\nscenario = flat-3d\n", r":3: "),
        ("[experiment]\nscenario tent-1d\n", r":2: "),
        ("[experiment]\nscenario = flat-oracle-2d\n[diagnostics]\ncount = 4\n", r":4: count = 4 violates count >= 8"),
        ("[experiment]\nscenario = flat-oracle-2d\n[diagnostics]\neps0 = 0.5\n", r":4: epsilon0 = 0.5 exceeds"),
        ("[experiment]\nscenario = flat-oracle-2d\n[diagnostics]\ndelta_eps0 = 0.3\n", r":4: delta0 \+ epsilon0"),
        ("[experiment]\nscenario = flat-oracle-2d\n[grid]\nm = 65\n[diagnostics]\nblowup_depth = 3\n", r":6: resolution floor"),
        ("[experiment]\nscenario = flat-oracle-2d\n[diagnostics]\nchecks = phi, magic\n", r":4: .*unknown checks"),
        ("[experiment]\nscenario = flat-oracle-2d\n[grid]\nm = 129\n", r":4: resolution floor: deepest blow-up radius"),
        ("[experiment]\nscenario = flat-oracle-2d\n[grid]\nm = 129\n[diagnostics]\nchecks = phi\n", r":4: resolution floor: smallest profile radius"),
    ],
)
def test_config_errors_are_line_anchored(text, pattern):
    with pytest.raises(ConfigError, match=pattern):
        parse_config(text, "c.ini")


def test_config_values_round_trip():
    cfg = parse_config(
        "[experiment]\nscenario = flat-oracle-2d\noutput = o\nseed = 7\n"
        "[grid]\nm = 65\n[solver]\nomega = 1.7\ncontinuation = no\n"
        "[diagnostics]\nsup_window = 0.1, 0.5\nchecks = sup, contact\n"
    )
    assert cfg.m == 65 and cfg.seed == 7 and not cfg.auto_omega and not cfg.continuation
    assert cfg.solver.omega == 1.7
    assert cfg.diagnostics.sup_window == (0.1, 0.5)
    assert cfg.diagnostics.checks == ("sup", "contact")


def test_tent_run_artifacts(tmp_path):
    out = tmp_path / "tent"
    cfg = write(tmp_path, f"[experiment]\nscenario = tent-1d\noutput = {out}\n[grid]\nm = 129\n")
    assert main(["run", "--config", str(cfg)]) == 0
    report = (out / "report.txt").read_text().splitlines()
    assert any(re.match(r"PASS AC3 max node error: .* <= 1e-08", l) for l in report)
    for line in report[1:]:
        assert re.match(r"(PASS|FAIL) AC\d+ ", line)
    u = read_solution(out / "solution.bin")
    assert u.values.size == 129
    assert (out / "solution.bin").stat().st_size == 129 * 8
    side = (out / "solution.txt").read_text()
    assert "dims = 129" in side and "h = 0.015625" in side and "L = 1.0" in side
    header, rows = read_csv(out / "profile.csv")
    assert tuple(header) == PROFILE_HEADER and len(rows) == 20
    header, _ = read_csv(out / "fits.csv")
    assert tuple(header) == FITS_HEADER


def flat_config(tmp_path, name, extra=""):
    out = tmp_path / name
    text = (
        f"[experiment]\nscenario = flat-oracle-2d\noutput = {out}\n[grid]\nm = 257\n"
        f"[diagnostics]\n{extra}"
    )
    return write(tmp_path, text, f"{name}.ini"), out


def test_flat_run_pass_lines_and_determinism(tmp_path):
    a, out_a = flat_config(tmp_path, "a")
    b, out_b = flat_config(tmp_path, "b")
    assert main(["run", "--config", str(a)]) == 0
    assert main(["run", "--config", str(b)]) == 0
    report = (out_a / "report.txt").read_text()
    for needle in ("PASS AC4 sup-decay exponent", "PASS AC2 Phi profile", "PASS AC4 contact set vs half-line"):
        assert needle in report
    for f in ("profile.csv", "fits.csv", "solution.bin", "report.txt"):
        assert (out_a / f).read_bytes() == (out_b / f).read_bytes()
    header, rows = read_csv(out_a / "fits.csv")
    assert {r[0] for r in rows} == {"F", "sup", "blowup_degree", "mean_value"}
    assert all(float(r[2]) > 0 for r in rows)


def test_criterion_failure_exit_code(tmp_path):
    cfg, out = flat_config(tmp_path, "strict", "checks = sup\nsup_range = 1.0, 1.1\n")
    assert main(["run", "--config", str(cfg)]) == 4
    assert "FAIL AC4 sup-decay exponent" in (out / "report.txt").read_text()


def test_solver_failure_exit_code(tmp_path):
    out = tmp_path / "nc"
    cfg = write(tmp_path, f"[experiment]\nscenario = flat-oracle-2d\noutput = {out}\n[grid]\nm = 65\n"
                "[solver]\nmax_sweeps = 5\ncontinuation = false\n[diagnostics]\nchecks = sup\n")
    assert main(["run", "--config", str(cfg)]) == 3
    assert "FAIL AC9 solver convergence" in (out / "report.txt").read_text()


def test_recentering_on_curved_scenario(curved_solution):
    sol = curved_solution
    h = sol.field.grid.h
    # the tuned odd mode leaves no normal slope at the free boundary point
    assert abs(sol.calibration[-1][1]) < 1e-6
    assert np.linalg.norm(sol.center) <= 2 * h
    assert np.allclose(free_boundary_center(sol.system, sol.field), sol.center)


def test_flat_free_boundary_at_origin(flat_solution):
    assert np.allclose(flat_solution.center, 0.0)
    assert flat_solution.odd == 0.0


def test_analytic_scenario_needs_no_solve():
    sol = solve_scenario(get_scenario("oracle-3half-2d"), Grid(2, 1.0, 33))
    assert sol.report is None and sol.converged


@pytest.mark.slow
def test_flat_3d_full_checks(tmp_path, capsys):
    out = tmp_path / "f3"
    cfg = write(tmp_path, f"[experiment]\nscenario = flat-3d\noutput = {out}\n")
    assert main(["run", "--config", str(cfg)]) == 0
    report = (out / "report.txt").read_text()
    assert report.count("PASS") == 14 and "FAIL" not in report


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "thinobs", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "flat-3d" in res.stdout


def test_accept_only_unknown_tag(capsys):
    assert main(["accept", "--only=nothing"]) == 2


def test_accept_only_oracle(capsys):
    assert main(["accept", "--only=oracle"]) == 0
    out = capsys.readouterr().out
    assert "PASS AC1" in out and "PASS AC2" in out and "AC3" not in out
    assert "2/2 criteria passed" in out
