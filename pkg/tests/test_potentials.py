import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from periodic_bie.cell_greens import eval_greens, make_cell
from periodic_bie.checks import gauss_identity_deviation
from periodic_bie.geometry import AffineDiffeo, RadialDiffeo, ReferenceCurve, build_boundary
from periodic_bie.potentials import (
    Density,
    NearBoundaryWarning,
    SingularTargetError,
    apply_half_plus_wstar,
    assemble_wstar,
    gradient_offboundary,
    kress_log_weights,
    near_boundary_distance,
    one_sided_limits,
    single_layer_matrix,
    single_layer_offboundary,
    single_layer_onboundary,
)

from oracles import fd_gradient

UNIT = make_cell(1.0, 1.0)
CIRCLE = RadialDiffeo((0.5, 0.5), 0.25)
ELLIPSE = AffineDiffeo(ReferenceCurve((0.5, 0.5), 0.2, 0.1))
PERTURBED = RadialDiffeo((0.5, 0.5), 0.25, (0.1, 0.05), (0.0, 0.08))


@pytest.fixture(scope="module")
def circle():
    return build_boundary(UNIT, CIRCLE, 128)


@pytest.fixture(scope="module")
def ellipse():
    return build_boundary(UNIT, ELLIPSE, 128)


def smooth(bmap):
    return np.cos(bmap.t) + 0.3 * np.sin(2 * bmap.t)


def test_kress_weights_integrate_log_kernel():
    # int log(4 sin^2(s/2)) cos(m s) ds = -2 pi / m for m >= 1, and 0 for m = 0
    n = 32
    r = kress_log_weights(n)
    t = 2 * np.pi * np.arange(n) / n
    assert np.sum(r) == pytest.approx(0.0, abs=1e-13)
    for m in (1, 3, 7):
        assert r @ np.cos(m * t) == pytest.approx(-2 * np.pi / m, abs=1e-12)


def test_wstar_mean_identity(circle):
    k = assemble_wstar(circle)
    r = 0.25
    total = circle.weights @ (0.5 + k.matrix @ np.ones(circle.n))
    expected = circle.perimeter - circle.perimeter * np.pi * r**2
    assert total == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("diffeo", [CIRCLE, ELLIPSE, PERTURBED])
@pytest.mark.parametrize("edges", [(1.0, 1.0), (2.0, 0.5)])
def test_gauss_identity(diffeo, edges):
    assert gauss_identity_deviation(build_boundary(make_cell(*edges), diffeo, 128)) <= 1e-8


def test_gauss_identity_with_polygon_area(circle):
    # the inscribed-polygon area differs from the curve's area at O(N^-2)
    kernel = assemble_wstar(circle).matrix / circle.weights[None, :]
    x = circle.nodes
    shoelace = 0.5 * np.sum(x[:, 0] * np.roll(x[:, 1], -1) - np.roll(x[:, 0], -1) * x[:, 1])
    dev = np.max(np.abs(circle.weights @ kernel - (0.5 - shoelace)))
    assert 1e-6 < dev < 1e-3


def test_wstar_zero_and_linearity(circle):
    k = assemble_wstar(circle)
    assert np.all(apply_half_plus_wstar(k, np.zeros(circle.n)) == 0.0)
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((2, circle.n))
    lhs = apply_half_plus_wstar(k, 2.0 * a - 3.0 * b)
    rhs = 2.0 * apply_half_plus_wstar(k, a) - 3.0 * apply_half_plus_wstar(k, b)
    assert np.max(np.abs(lhs - rhs)) <= 1e-13
    with pytest.raises(ValueError):
        apply_half_plus_wstar(k, np.zeros(circle.n + 1))


def test_zero_mean_preserved(ellipse):
    k = assemble_wstar(ellipse)
    rng = np.random.default_rng(4)
    for _ in range(5):
        mu = rng.standard_normal(ellipse.n)
        mu -= mu @ ellipse.weights / ellipse.perimeter
        dens = Density(mu, ellipse.weights)
        assert dens.is_zero_mean()
        out = apply_half_plus_wstar(k, dens)
        assert isinstance(out, Density)
        assert abs(out.weighted_integral()) <= 1e-10


def test_wstar_self_convergence():
    coarse = build_boundary(UNIT, CIRCLE, 64)
    fine = build_boundary(UNIT, CIRCLE, 256)
    a = assemble_wstar(coarse).matrix @ np.cos(coarse.t)
    b = assemble_wstar(fine).matrix @ np.cos(fine.t)
    assert np.max(np.abs(a - b[::4])) <= 1e-10


def test_wstar_ellipse_self_convergence():
    coarse = build_boundary(UNIT, ELLIPSE, 128)
    fine = build_boundary(UNIT, ELLIPSE, 512)
    a = assemble_wstar(coarse).matrix @ smooth(coarse)
    b = assemble_wstar(fine).matrix @ smooth(fine)
    assert np.max(np.abs(a - b[::4])) <= 1e-10


def test_offboundary_zero_and_periodic(circle):
    x = np.array([[0.1, 0.1], [0.9, 0.3]])
    assert np.all(single_layer_offboundary(circle, np.zeros(circle.n), x) == 0.0)
    mu = smooth(circle)
    v = single_layer_offboundary(circle, mu, x)
    shifted = single_layer_offboundary(circle, mu, x + np.array([[2.0, -1.0], [-3.0, 4.0]]))
    assert np.max(np.abs(v - shifted)) <= 1e-12


def test_offboundary_matches_refined_quadrature(circle):
    x = np.array([[0.1, 0.1], [0.5, 0.1], [0.9, 0.6], [0.02, 0.5]])
    mu = smooth(circle)
    coarse = single_layer_offboundary(circle, mu, x)
    fine_map = build_boundary(UNIT, CIRCLE, 512)
    fine = single_layer_offboundary(fine_map, smooth(fine_map), x)
    assert np.max(np.abs(coarse - fine)) <= 1e-10


def test_offboundary_direct_sum(circle):
    x = np.array([0.12, 0.9])
    mu = smooth(circle)
    direct = sum(eval_greens(UNIT, x - circle.nodes[m]) * mu[m] * circle.weights[m] for m in range(circle.n))
    assert single_layer_offboundary(circle, mu, x) == pytest.approx(direct, abs=1e-14)


def test_gradient_matches_fd(circle):
    mu = smooth(circle)
    gzero = gradient_offboundary(circle, np.zeros(circle.n), np.array([[0.1, 0.2]]))
    assert np.all(gzero == 0.0)
    for x in ([0.1, 0.2], [0.9, 0.85], [0.5, 0.05]):
        x = np.array(x)
        fd = fd_gradient(lambda p: single_layer_offboundary(circle, mu, p), x)
        assert np.max(np.abs(gradient_offboundary(circle, mu, x) - fd)) <= 1e-6


def test_near_boundary_warning_and_singular_target(circle):
    mu = smooth(circle)
    close = circle.nodes[0] + 0.5 * near_boundary_distance(circle) * circle.normals[0]
    with pytest.warns(NearBoundaryWarning):
        single_layer_offboundary(circle, mu, close)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        single_layer_offboundary(circle, mu, np.array([0.05, 0.05]))
        single_layer_offboundary(circle, mu, close, upsample=8)
    with pytest.raises(SingularTargetError):
        single_layer_offboundary(circle, mu, circle.nodes[3])
    with pytest.raises(SingularTargetError):
        gradient_offboundary(circle, mu, circle.nodes[3] + np.array([1.0, 0.0]))


def test_onboundary_zero_and_self_convergence():
    coarse = build_boundary(UNIT, CIRCLE, 64)
    fine = build_boundary(UNIT, CIRCLE, 128)
    assert np.all(single_layer_onboundary(coarse, np.zeros(64)) == 0.0)
    a = single_layer_onboundary(coarse, np.cos(coarse.t))
    b = single_layer_onboundary(fine, np.cos(fine.t))
    assert np.max(np.abs(a - b[::2])) <= 1e-9


@pytest.mark.parametrize("diffeo", [CIRCLE, ELLIPSE, PERTURBED])
def test_trace_matches_exterior_limit(diffeo):
    bmap = build_boundary(UNIT, diffeo, 128)
    mu = smooth(bmap)
    idx = np.arange(0, 128, 8)
    vals, _ = one_sided_limits(bmap, mu, "exterior", nodes=idx)
    ivals, _ = one_sided_limits(bmap, mu, "interior", nodes=idx)
    trace = single_layer_onboundary(bmap, mu)[idx]
    assert np.max(np.abs(vals - trace)) <= 1e-6
    assert np.max(np.abs(ivals - trace)) <= 1e-6


@pytest.mark.parametrize("diffeo", [CIRCLE, ELLIPSE, PERTURBED])
def test_jump_relations(diffeo):
    bmap = build_boundary(UNIT, diffeo, 128)
    mu = smooth(bmap)
    idx = np.arange(0, 128, 8)
    wmu = (assemble_wstar(bmap).matrix @ mu)[idx]
    _, ext = one_sided_limits(bmap, mu, "exterior", nodes=idx)
    _, inn = one_sided_limits(bmap, mu, "interior", nodes=idx)
    assert np.max(np.abs(ext - (0.5 * mu[idx] + wmu))) <= 1e-6
    assert np.max(np.abs(inn - (-0.5 * mu[idx] + wmu))) <= 1e-6


def test_one_sided_limits_rejects_side(circle):
    with pytest.raises(ValueError):
        one_sided_limits(circle, smooth(circle), "left")


def test_single_layer_matrix_symmetry_on_circle(circle):
    # S is even and the speeds are equal, so the matrix is symmetric
    a = single_layer_matrix(circle)
    assert np.max(np.abs(a - a.T)) <= 1e-14


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 6), st.floats(-1, 1), st.floats(-1, 1))
def test_zero_mean_property(m, a, b):
    bmap = build_boundary(UNIT, PERTURBED, 64)
    mu = a * np.cos(m * bmap.t) + b * np.sin(m * bmap.t)
    mu -= mu @ bmap.weights / bmap.perimeter
    out = apply_half_plus_wstar(assemble_wstar(bmap), mu)
    assert abs(out @ bmap.weights) <= 1e-10
