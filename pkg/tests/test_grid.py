import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thinobs.grid import (
    GridError,
    GridFunction,
    ThinManifold,
    build_grid,
    build_sphere_sampler,
    flat_manifold,
    interpolate,
    interpolate_many,
    manifold_constrained_nodes,
    parabolic_manifold,
    sphere_nodes,
)


@pytest.mark.parametrize("n,L,m", [(2, 1.0, 4), (2, 1.0, 1), (4, 1.0, 9), (2, -1.0, 9)])
def test_invalid_grids_rejected(n, L, m):
    with pytest.raises(GridError):
        build_grid(n, L, m)


def test_spacing_and_origin():
    g = build_grid(2, 1.0, 257)
    assert g.h == 2.0 / 256
    assert g.origin_index == (128, 128)
    assert np.all(g.coords()[g.origin_index] == 0.0)
    assert g.points().shape == (257 * 257, 2)


@pytest.mark.parametrize("n,m", [(1, 9), (2, 9), (3, 5)])
def test_boundary_mask_counts(n, m):
    g = build_grid(n, 1.0, m)
    assert g.boundary_mask().sum() == m**n - (m - 2) ** n


def test_grid_function_is_read_only_and_finite():
    g = build_grid(2, 1.0, 5)
    u = GridFunction.from_callable(g, lambda x: x[..., 0])
    with pytest.raises(ValueError):
        u.values[0] = 1.0
    with pytest.raises(GridError):
        GridFunction(g, np.full(g.size, np.nan))


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
    st.lists(st.floats(-0.99, 0.99), min_size=2, max_size=2),
)
def test_interpolation_reproduces_bilinear(c, x):
    # multilinear interpolation is exact on functions bilinear in each cell
    g = build_grid(2, 1.0, 9)
    f = lambda p: c[0] + c[1] * p[..., 0] + c[2] * p[..., 1] + c[3] * p[..., 0] * p[..., 1]
    u = GridFunction.from_callable(g, f)
    assert interpolate(u, x) == pytest.approx(float(f(np.array(x))), abs=1e-12)


def test_interpolation_at_nodes_and_outside():
    g = build_grid(3, 1.0, 7)
    u = GridFunction.from_callable(g, lambda p: np.sin(p[..., 0]) + p[..., 2] ** 2)
    pts = g.points()[::17]
    assert np.allclose(interpolate_many(u, pts), u.values[::17], atol=1e-14)
    with pytest.raises(GridError):
        interpolate(u, [1.5, 0.0, 0.0])


def test_manifold_normalization():
    flat_manifold().check_normalized(2)
    parabolic_manifold(0.2).check_normalized(3)
    tilted = ThinManifold(lambda xt: 0.3 * xt[..., 0], lambda xt: np.full_like(xt, 0.3), name="tilted")
    with pytest.raises(GridError):
        tilted.check_normalized(2)
    with pytest.raises(GridError):
        ThinManifold(lambda xt: 0 * xt[..., 0], lambda xt: 0 * xt, beta=0.5)


def test_constrained_nodes_flat_and_curved():
    g = build_grid(2, 1.0, 33)
    flat = manifold_constrained_nodes(g, flat_manifold())
    assert len(flat) == 33
    assert np.all(g.points()[flat.indices][:, 1] == 0.0)
    curved = manifold_constrained_nodes(g, parabolic_manifold(0.2))
    pts = g.points()[curved.indices]
    # each column picks the layer nearest the graph
    assert np.all(np.abs(pts[:, 1] - 0.2 * pts[:, 0] ** 2) <= g.h / 2 + 1e-12)
    assert np.allclose(curved.feet[:, 1], 0.2 * curved.feet[:, 0] ** 2)


def test_constrained_nodes_1d_is_origin():
    g = build_grid(1, 1.0, 9)
    nodes = manifold_constrained_nodes(g, flat_manifold())
    assert list(nodes.indices) == [4]


@pytest.mark.parametrize("n,q,measure", [(1, 2, 2.0), (2, 720, 2 * np.pi), (3, 4096, 4 * np.pi)])
def test_sphere_weights_sum_to_measure(n, q, measure):
    _, w = sphere_nodes(n, q)
    assert w.sum() == pytest.approx(measure, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.8), st.integers(1, 6))
def test_circle_quadrature_exact_for_trig_moments(r, k):
    # equispaced rule integrates cos(k theta)^2 exactly for k < q/2
    dirs, w = sphere_nodes(2, 720)
    pts = r * dirs
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    assert np.sum(w * r * np.cos(k * theta) ** 2) == pytest.approx(np.pi * r, rel=1e-12)


def test_sphere_3d_second_moment():
    dirs, w = sphere_nodes(3, 4096)
    assert np.sum(w * dirs[:, 2] ** 2) == pytest.approx(4 * np.pi / 3, rel=2e-3)


def test_sphere_sampler_bounds():
    g = build_grid(2, 1.0, 33)
    s = build_sphere_sampler(g, 0.5, 64)
    assert np.allclose(np.linalg.norm(s.points, axis=1), 0.5)
    with pytest.raises(GridError):
        build_sphere_sampler(g, 0.95, 64)
    with pytest.raises(GridError):
        sphere_nodes(2, 8)
