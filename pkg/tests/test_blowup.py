import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thinobs.blowup import (
    DegenerateBlowupError,
    blowup_scale,
    blowup_sequence,
    exact_signorini_2d,
    exact_signorini_3d,
    homogeneity_degree,
    rescale_blowup,
    tent_1d,
    tent_energy,
    verify_signorini_oracle,
)
from thinobs.frequency import FrequencyError, boundary_integral_F, compute_profile
from thinobs.grid import Grid, GridFunction, build_grid


def test_oracle_verification_passes():
    v = verify_signorini_oracle(count=1000)
    assert v.passed
    assert v.harmonic_residual <= 1e-8
    assert v.max_jump_on_contact < 0


def test_oracle_verification_detects_wrong_field():
    good = exact_signorini_2d()
    wrong = type(good)("bad", 2, lambda x: good(x) + 0.1 * x[..., 0] ** 2, 1.5, "")
    assert not verify_signorini_oracle(wrong).passed


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 3.0))
def test_oracle_homogeneous_of_degree_three_halves(x1, x2, lam):
    u = exact_signorini_2d()
    x = np.array([x1, x2])
    assert u(lam * x) == pytest.approx(lam**1.5 * u(x), abs=1e-12)


def test_oracle_frequencies():
    assert exact_signorini_2d().frequency == 4.0
    assert exact_signorini_3d().frequency == 5.0
    p = compute_profile(exact_signorini_3d(), 0.5, 0.85, 10, n=3)
    assert np.allclose(p.phi, 5.0, atol=2e-3)


def test_oracle_contact_set_and_sign():
    u = exact_signorini_2d()
    xs = np.linspace(-1, 1, 201)
    trace = u(np.column_stack([xs, np.zeros_like(xs)]))
    assert np.all(trace[xs <= 0] == pytest.approx(0.0, abs=1e-15))
    assert np.all(trace[xs > 0] > 0)


def test_tent():
    t = tent_1d(2.0)
    assert t(np.array([0.0])) == 2.0 and t(np.array([1.0])) == 0.0
    assert tent_energy(2.0) == 4.0
    with pytest.raises(ValueError):
        tent_1d(-1.0)


def test_rescaling_normalized():
    u = exact_signorini_2d().sample(build_grid(2, 1.0, 257))
    ur = rescale_blowup(u, 0.2, Grid(2, 1.25, 101))
    assert boundary_integral_F(ur, 1.0) == pytest.approx(1.0, rel=1e-3)
    # homogeneity: d_r = sqrt(pi) r^(3/2)
    assert blowup_scale(exact_signorini_2d(), 0.2) == pytest.approx(np.sqrt(np.pi) * 0.2**1.5, rel=1e-10)


def test_degenerate_blowup():
    g = build_grid(2, 1.0, 33)
    with pytest.raises(DegenerateBlowupError):
        rescale_blowup(GridFunction(g, np.zeros(g.size)), 0.2, Grid(2, 1.25, 21))


def test_homogeneity_degree_of_oracle():
    est = homogeneity_degree(exact_signorini_2d(), (0.1, 0.8), 12)
    assert est.degree == pytest.approx(1.5, abs=1e-10)
    assert est.frequency_degree == pytest.approx(1.5, abs=1e-10)


def test_blowup_sequence_of_homogeneous_field():
    u = exact_signorini_2d().sample(build_grid(2, 1.0, 257))
    bs = blowup_sequence(u, 0.4, 2)
    assert np.allclose(bs.normalization, 1.0, rtol=1e-3)
    assert np.all(bs.consecutive_distances() < 1e-3)
    assert np.allclose(bs.frequencies, 4.0, atol=0.02)
    assert np.allclose(bs.degrees, 1.5, atol=0.02)


def test_blowup_resolution_floor():
    u = exact_signorini_2d().sample(build_grid(2, 1.0, 65))
    with pytest.raises(FrequencyError):
        blowup_sequence(u, 0.4, 3)
    with pytest.raises(FrequencyError):
        blowup_sequence(u, 0.5, 0)
