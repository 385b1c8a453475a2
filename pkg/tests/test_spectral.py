"""
Tests for the sine eigenbasis, transforms and the dealiased gradient product.
"""

import math

import numpy as np
import pytest
from scipy import integrate

from jmgt_sim.core.exceptions import DomainMismatch, SpectralError
from jmgt_sim.core.spectral import (
    BoxDomain,
    ModalField,
    boundary_gradient_residual,
    elliptic_solve,
    evaluate_at,
    from_grid,
    gradient_dot,
    grid_l2_norm,
    laplacian,
    linf_norm,
    sobolev_seminorm,
    to_grid,
)


@pytest.fixture
def line():
    """The interval [0, pi] with 8 modes."""
    return BoxDomain((math.pi,), (8,))


@pytest.fixture
def square():
    """The square [0, pi]^2 with 6 x 6 modes."""
    return BoxDomain((math.pi, math.pi), (6, 6))


def _cosine_to_sine(a, m):
    """Sine coefficient of cos(a x) on [0, pi] for mode m."""
    if m == a:
        return 0.0
    return 2.0 / math.pi * m * (1.0 - (-1.0) ** (m + a)) / (m * m - a * a)


def test_domain_validation():
    """Test invalid boxes."""
    with pytest.raises(SpectralError):
        BoxDomain((1.0, 1.0, 1.0, 1.0), (2, 2, 2, 2))
    with pytest.raises(SpectralError):
        BoxDomain((1.0,), (2, 2))
    with pytest.raises(SpectralError):
        BoxDomain((0.0,), (2,))
    with pytest.raises(SpectralError):
        BoxDomain((1.0,), (0,))


def test_eigenvalues_and_grid(square):
    """Test eigenvalues and dealiased grid sizes."""
    assert square.eigenvalues.shape == (6, 6)
    assert square.eigenvalues[0, 0] == pytest.approx(2.0)
    assert square.eigenvalues[2, 1] == pytest.approx(13.0)
    assert square.grid_points() == (11, 11)
    assert square.grid_points(False) == (6, 6)
    assert square.volume_factor == pytest.approx((math.pi / 2) ** 2)


def test_single_mode_bounds(line):
    """Test modes outside 1..M raise."""
    with pytest.raises(SpectralError):
        ModalField.single_mode(line, (9,))
    with pytest.raises(SpectralError):
        ModalField.single_mode(line, (1, 1))


def test_field_arithmetic(line):
    """Test linear operations and domain checks."""
    a = ModalField.single_mode(line, (1,), 2.0)
    b = ModalField.single_mode(line, (3,), 1.0)
    combo = 0.5 * (a + b) - b / 2.0
    assert combo.allclose(ModalField.single_mode(line, (1,), 1.0))
    assert (-a).coeffs[0] == -2.0
    with pytest.raises(DomainMismatch):
        a + ModalField.zeros(BoxDomain((1.0,), (8,)))
    with pytest.raises(SpectralError):
        ModalField(np.zeros(3), line)


def test_sobolev_seminorms(line):
    """Test seminorms of single modes."""
    mode = ModalField.single_mode(line, (2,), 1.0)
    assert sobolev_seminorm(mode, 0) == pytest.approx(math.sqrt(math.pi / 2))
    assert sobolev_seminorm(mode, 2) == pytest.approx(4.0 * math.sqrt(math.pi / 2))
    assert sobolev_seminorm(mode, 3) == pytest.approx(8.0 * math.sqrt(math.pi / 2))
    assert sobolev_seminorm(laplacian(mode), 0) == pytest.approx(sobolev_seminorm(mode, 2))


def test_elliptic_solve_inverts_laplacian(square):
    """Test -c2 Lap(u) = rhs."""
    rng = np.random.default_rng(0)
    u = ModalField(rng.standard_normal(square.shape), square)
    rhs = laplacian(u) * -2.5
    assert elliptic_solve(rhs, 2.5).allclose(u)
    with pytest.raises(SpectralError):
        elliptic_solve(rhs, 0.0)


@pytest.mark.parametrize("dealias", [True, False])
def test_grid_transform_inverse(square, dealias):
    """Test from_grid(to_grid(f)) recovers the coefficients."""
    rng = np.random.default_rng(1)
    f = ModalField(rng.standard_normal(square.shape), square)
    assert from_grid(to_grid(f, dealias)).allclose(f, rtol=1e-12, atol=1e-12)


def test_grid_values_match_point_evaluation(square):
    """Test the DST synthesis against direct evaluation."""
    rng = np.random.default_rng(2)
    f = ModalField(rng.standard_normal(square.shape), square)
    grid = to_grid(f)
    x, y = np.meshgrid(*grid.nodes(), indexing="ij")
    direct = evaluate_at(f, np.column_stack([x.ravel(), y.ravel()])).reshape(x.shape)
    assert np.allclose(grid.values, direct, atol=1e-12)


def test_grid_l2_norm_matches_seminorm(square):
    """Test discrete orthogonality of the collocation grid."""
    rng = np.random.default_rng(3)
    f = ModalField(rng.standard_normal(square.shape), square)
    assert grid_l2_norm(f) == pytest.approx(sobolev_seminorm(f, 0), rel=1e-12)


def test_linf_norm(line):
    """Test the sup norm of sin(x) is reached at the midpoint node."""
    assert linf_norm(ModalField.single_mode(line, (1,), -3.0)) == pytest.approx(3.0)
    assert linf_norm(ModalField.zeros(line)) == 0.0


def test_evaluate_at_1d(line):
    """Test point evaluation in 1D."""
    f = ModalField.single_mode(line, (3,), 2.0)
    points = np.array([0.1, 1.0, 2.5])
    assert np.allclose(evaluate_at(f, points), 2.0 * np.sin(3.0 * points))
    with pytest.raises(SpectralError):
        evaluate_at(f, np.zeros((2, 2)))


def test_boundary_gradient_residual(line, square):
    """Test sin(x) has a unit normal derivative while sin^3(x) has none."""
    assert boundary_gradient_residual(ModalField.single_mode(line, (1,), 1.0)) == pytest.approx(1.0)
    cubed = np.zeros(8)
    cubed[0], cubed[2] = 0.75, -0.25
    assert boundary_gradient_residual(ModalField(cubed, line)) == pytest.approx(0.0, abs=1e-12)
    residual = boundary_gradient_residual(ModalField.single_mode(square, (1, 1), 1.0))
    assert residual == pytest.approx(1.0, rel=1e-12)


def test_gradient_dot_zero_sigma(line):
    """Test sigma = 0 short-circuits to zero."""
    f = ModalField.single_mode(line, (1,), 1.0)
    assert np.all(gradient_dot(f, f, 0.0).coeffs == 0.0)


def test_gradient_dot_closed_form_1d(line):
    """Test 2 (sin x)' (sin x)' = 1 + cos 2x projected onto sines."""
    f = ModalField.single_mode(line, (1,), 1.0)
    result = gradient_dot(f, f, 1.0)
    expected = [_cosine_to_sine(0, m) + _cosine_to_sine(2, m) for m in range(1, 9)]
    assert np.allclose(result.coeffs, expected, atol=1e-13)


def test_gradient_dot_against_quadrature(line):
    """Test random 1D products against adaptive quadrature."""
    rng = np.random.default_rng(4)
    psi = ModalField(rng.standard_normal(8), line)
    phi = ModalField(rng.standard_normal(8), line)
    k = np.arange(1, 9)

    def product(x):
        return 2.0 * 0.7 * np.dot(psi.coeffs * k, np.cos(k * x)) * np.dot(phi.coeffs * k, np.cos(k * x))

    expected = [
        2.0 / math.pi * integrate.quad(lambda x: product(x) * math.sin(m * x), 0.0, math.pi, limit=200)[0]
        for m in k
    ]
    assert np.allclose(gradient_dot(psi, phi, 0.7).coeffs, expected, atol=1e-9)


def test_gradient_dot_closed_form_2d(square):
    """Test |grad(sin x sin y)|^2 = cos^2 x sin^2 y + sin^2 x cos^2 y in 2D."""
    f = ModalField.single_mode(square, (1, 1), 1.0)
    result = gradient_dot(f, f, 0.5)
    cos_sq = np.array([0.5 * (_cosine_to_sine(0, m) + _cosine_to_sine(2, m)) for m in range(1, 7)])
    sin_sq = np.array([0.5 * (_cosine_to_sine(0, m) - _cosine_to_sine(2, m)) for m in range(1, 7)])
    expected = np.outer(cos_sq, sin_sq) + np.outer(sin_sq, cos_sq)
    assert np.allclose(result.coeffs, expected, atol=1e-13)


def test_gradient_dot_domain_mismatch(line):
    """Test fields on different boxes are rejected."""
    other = BoxDomain((1.0,), (8,))
    with pytest.raises(DomainMismatch):
        gradient_dot(ModalField.zeros(line), ModalField.zeros(other), 1.0)
