import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from periodic_bie.cell_greens import (
    InvalidCellError,
    SingularityError,
    eval_greens,
    eval_greens_grad,
    fourier_coefficient,
    greens_regular_grad,
    greens_regular_part,
    make_cell,
    verify_poisson_property,
)

from oracles import brute_force_greens, fd_gradient

# brute-force regularized Fourier sums (tests/oracles.py), frozen
FROZEN = [
    ((1.0, 1.0), (0.5, 0.5), 0.05515890003816287),
    ((1.0, 1.0), (0.3, 0.17), 0.010240399799823678),
    ((2.0, 0.5), (1.0, 0.25), 0.1666677767202796),
    ((2.0, 0.5), (0.6, 0.2), 0.08673509707390399),
]

coord = st.floats(0.0, 1.0, allow_nan=False)


@pytest.fixture(scope="module")
def unit():
    return make_cell(1.0, 1.0)


@pytest.fixture(scope="module")
def aniso():
    return make_cell(2.0, 0.5)


def test_make_cell_measure_and_truncation(aniso):
    assert aniso.cell_measure == pytest.approx(1.0)
    n_real, n_fourier = aniso.truncation
    assert n_real > 1 and n_fourier > 1
    assert np.allclose(aniso.real_images[0], 0.0)


@pytest.mark.parametrize("edges", [(0.0, 1.0), (-1.0, 1.0), (1.0, np.inf), (100.0, 1.0), (1.0, 0.01)])
def test_make_cell_rejects(edges):
    with pytest.raises(InvalidCellError):
        make_cell(*edges)


def test_make_cell_rejects_bad_xi():
    with pytest.raises(InvalidCellError):
        make_cell(1.0, 1.0, ewald_xi=-1.0)


def test_fourier_coefficient_values(unit, aniso):
    assert fourier_coefficient(unit, (1, 0)) == pytest.approx(-1.0 / (4.0 * np.pi**2))
    # k = (1/2, 0) in the (2, 0.5) cell
    assert fourier_coefficient(aniso, (1, 0)) == pytest.approx(-1.0 / np.pi**2)
    assert fourier_coefficient(unit, (3, 4)) == fourier_coefficient(unit, (-3, -4))
    with pytest.raises(ValueError):
        fourier_coefficient(unit, (0, 0))


@pytest.mark.parametrize("edges,x,expected", FROZEN)
def test_matches_frozen_oracle(edges, x, expected):
    assert eval_greens(make_cell(*edges), np.array(x)) == pytest.approx(expected, abs=1e-12)


def test_live_oracle_at_cell_center(unit):
    assert abs(eval_greens(unit, np.array([0.5, 0.5])) - brute_force_greens((0.5, 0.5), (1.0, 1.0))) <= 1e-8


def test_log_singularity(unit):
    # S - log|x| / (2 pi) stays bounded as x -> 0
    r = np.array([1e-2, 1e-4, 1e-6])
    x = np.stack([r, 0.0 * r], axis=1)
    reg = eval_greens(unit, x) - np.log(r) / (2.0 * np.pi)
    assert np.ptp(reg) < 1e-4
    assert reg[-1] == pytest.approx(greens_regular_part(unit, np.zeros(2)), abs=1e-10)


def test_lattice_raises(unit, aniso):
    with pytest.raises(SingularityError):
        eval_greens(unit, np.array([1.0, -2.0]))
    with pytest.raises(SingularityError):
        eval_greens_grad(aniso, np.array([4.0, 0.5]))


def test_vectorized_shapes(unit):
    x = np.random.default_rng(0).uniform(0.1, 0.9, size=(3, 4, 2))
    assert eval_greens(unit, x).shape == (3, 4)
    assert eval_greens_grad(unit, x).shape == (3, 4, 2)
    assert isinstance(eval_greens(unit, x[0, 0]), float)
    with pytest.raises(ValueError):
        eval_greens(unit, np.zeros(3))


def test_zero_cell_mean_second_order(unit):
    means = []
    for m in (64, 128, 256):
        # midpoint grid never hits the lattice point at the origin
        s = (np.arange(m) + 0.5) / m
        X, Y = np.meshgrid(s, s, indexing="ij")
        means.append(float(np.mean(eval_greens(unit, np.stack([X, Y], axis=-1)))))
    assert abs(means[-1]) <= 1e-3
    assert abs(means[1] / means[2]) == pytest.approx(4.0, rel=0.1)
    assert abs(means[0] / means[1]) == pytest.approx(4.0, rel=0.1)


def test_gradient_matches_fd(unit, aniso):
    rng = np.random.default_rng(2)
    for cell in (unit, aniso):
        for _ in range(10):
            x = rng.uniform(0.15, 0.85, size=2) * cell.edges
            fd = fd_gradient(lambda p: eval_greens(cell, p), x)
            assert np.max(np.abs(eval_greens_grad(cell, x) - fd)) <= 1e-6


def test_gradient_symmetry_of_square_cell(unit):
    # reflection x1 -> 1 - x1 fixes the line x1 = 1/2
    assert abs(eval_greens_grad(unit, np.array([0.5, 0.3]))[0]) <= 1e-14


def test_regular_part_consistency(unit):
    x = np.array([[0.05, 0.02], [0.2, -0.1], [-0.3, 0.25]])
    r = np.hypot(x[:, 0], x[:, 1])
    assert np.allclose(greens_regular_part(unit, x), eval_greens(unit, x) - np.log(r) / (2 * np.pi), atol=1e-13)
    grad = eval_greens_grad(unit, x) - x / (2 * np.pi * r[:, None] ** 2)
    assert np.allclose(greens_regular_grad(unit, x), grad, atol=1e-12)
    assert np.allclose(greens_regular_grad(unit, np.zeros(2)), 0.0, atol=1e-14)


def test_poisson_property(unit, aniso):
    assert abs(verify_poisson_property(unit, np.array([0.37, 0.61]))) < 1e-4
    assert abs(verify_poisson_property(aniso, np.array([0.74, 0.305]))) < 1e-4
    x = np.array([0.37, 0.61])
    ratio = verify_poisson_property(unit, x, 4e-3) / verify_poisson_property(unit, x, 2e-3)
    assert ratio == pytest.approx(4.0, rel=0.02)


@settings(max_examples=40, deadline=None)
@given(coord, coord, st.integers(-3, 3), st.integers(-3, 3))
def test_periodic_and_even(u, v, a, b):
    cell = make_cell(2.0, 0.5)
    x = np.array([u, v]) * cell.edges
    if np.hypot(*cell.reduce(x)) < 1e-3:
        return
    s = eval_greens(cell, x)
    assert abs(eval_greens(cell, -x) - s) <= 1e-12
    assert abs(eval_greens(cell, x + np.array([a, b]) * cell.edges) - s) <= 1e-12
    g = eval_greens_grad(cell, x)
    assert np.max(np.abs(eval_greens_grad(cell, -x) + g)) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(coord, coord)
def test_ewald_parameter_independence(u, v):
    base = make_cell(1.0, 1.0)
    x = np.array([u, v])
    if np.hypot(*base.reduce(x)) < 1e-3:
        return
    s = eval_greens(base, x)
    for f in (0.5, 2.0):
        alt = make_cell(1.0, 1.0, ewald_xi=f * base.ewald_xi)
        assert abs(eval_greens(alt, x) - s) <= 1e-10
