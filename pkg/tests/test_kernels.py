"""
Tests for memory kernels, the Mittag-Leffler function and admissibility checks.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from jmgt_sim.core.exceptions import DiracNotPointwise, DomainError, FitFailure
from jmgt_sim.core.kernels import (
    Abel,
    CallableKernel,
    Dirac,
    Exponential,
    MittagLeffler,
    Polynomial,
    RegularizedAbel,
    evaluate,
    kernel_from_dict,
    laplace_transform,
    mittag_leffler,
    monotonicity_check,
    phi_a,
    phi_b,
    soe_fit,
    strong_positivity_form,
    strong_positivity_ratio,
)

GRID = np.geomspace(0.01, 10.0, 200)


def test_closed_form_values():
    """Test kernel values at t = 1."""
    assert evaluate(Abel(0.5), 1.0) == pytest.approx(1.0 / math.sqrt(math.pi))
    assert evaluate(Exponential(2.0), 1.0) == pytest.approx(math.exp(-2.0))
    assert evaluate(Polynomial(2.0), 1.0) == pytest.approx(0.25)
    assert evaluate(RegularizedAbel(0.5, 1.0), 1.0) == pytest.approx(
        math.exp(-1.0) / math.sqrt(math.pi)
    )


def test_evaluate_rejects_nonpositive_times():
    """Test evaluate raises DomainError at t <= 0."""
    with pytest.raises(DomainError):
        evaluate(Abel(0.5), np.array([0.0, 1.0]))


def test_dirac_has_no_pointwise_values():
    """Test every pointwise operation on the Dirac kernel raises."""
    with pytest.raises(DiracNotPointwise):
        evaluate(Dirac(), 1.0)
    with pytest.raises(DiracNotPointwise):
        monotonicity_check(Dirac(), GRID)
    with pytest.raises(DiracNotPointwise):
        soe_fit(Dirac(), 10.0, 0.01)


@pytest.mark.parametrize(
    "factory",
    [
        lambda: Abel(0.0),
        lambda: Abel(1.0),
        lambda: Exponential(0.0),
        lambda: RegularizedAbel(0.5, -1.0),
        lambda: MittagLeffler(0.5, 0.25),
        lambda: MittagLeffler(0.5, 1.5),
        lambda: Polynomial(1.0),
    ],
)
def test_parameter_ranges(factory):
    """Test out-of-range parameters raise DomainError."""
    with pytest.raises(DomainError):
        factory()


@pytest.mark.parametrize(
    "kernel",
    [Abel(0.3), Exponential(1.5), RegularizedAbel(0.5, 2.0), Polynomial(3.0), MittagLeffler(0.5, 0.75)],
)
def test_antiderivatives_match_quadrature(kernel):
    """Test K1 and K2 against adaptive quadrature."""
    t = 2.0
    k1, _ = integrate.quad(kernel, 0.0, t, limit=200)
    assert float(kernel.antiderivative(t)) == pytest.approx(k1, rel=1e-6)
    k2, _ = integrate.quad(lambda s: float(kernel.antiderivative(s)), 0.0, t, limit=200)
    assert float(kernel.second_antiderivative(t)) == pytest.approx(k2, rel=1e-6)


def test_mittag_leffler_reductions():
    """Test E_{1,1}, E_{2,1} and E_{a,b}(0)."""
    for z in (-5.0, -0.3, 0.0, 2.0):
        assert mittag_leffler(1.0, 1.0, z) == pytest.approx(math.exp(z), rel=1e-12)
    for x in (0.5, 1.0, 3.0):
        assert mittag_leffler(2.0, 1.0, -(x**2)) == pytest.approx(math.cos(x), abs=1e-12)
    assert mittag_leffler(0.5, 0.75, 0.0) == pytest.approx(1.0 / special.gamma(0.75))


@pytest.mark.parametrize("x", [0.5, 3.0, 9.0, 20.0, 60.0])
def test_mittag_leffler_half_order(x):
    """Test E_{1/2,1}(-x) = exp(x^2) erfc(x) across all regimes."""
    assert mittag_leffler(0.5, 1.0, -x) == pytest.approx(special.erfcx(x), rel=1e-10)


def test_mittag_leffler_vectorised():
    """Test array input keeps its shape."""
    z = -np.linspace(0.0, 30.0, 12).reshape(3, 4)
    values = mittag_leffler(0.5, 1.0, z)
    assert values.shape == (3, 4)
    assert np.allclose(values, special.erfcx(-z), rtol=1e-10)


def test_mittag_leffler_rejects_bad_parameters():
    """Test alpha <= 0 raises DomainError."""
    with pytest.raises(DomainError):
        mittag_leffler(0.0, 1.0, -1.0)


def test_phi_helpers_continuous_at_switch():
    """Test the series and direct branches agree near 1e-2."""
    below, above = np.nextafter(1e-2, 0.0), 1e-2
    assert phi_a(below) == pytest.approx(phi_a(above), rel=1e-10)
    assert phi_b(below) == pytest.approx(phi_b(above), rel=1e-10)
    assert phi_a(0.0) == pytest.approx(0.5)
    assert phi_b(0.0) == pytest.approx(0.5)


@pytest.mark.parametrize("x", [0.5, 2.0, 5.0, 40.0])
def test_phi_helpers_closed_forms(x):
    """Test both helpers against their closed forms away from zero."""
    assert phi_a(x) == pytest.approx((x - 1.0 + math.exp(-x)) / x**2, rel=1e-14)
    assert phi_b(x) == pytest.approx((1.0 - math.exp(-x) * (1.0 + x)) / x**2, rel=1e-14)


def test_phi_helpers_vectorised():
    """Test mixed small and large arguments in one array."""
    x = np.array([0.0, 1e-3, 0.5, 2.0])
    direct = (x[2:] - 1.0 + np.exp(-x[2:])) / x[2:] ** 2
    assert np.allclose(phi_a(x)[2:], direct, rtol=1e-14)
    assert phi_a(x)[0] == pytest.approx(0.5)
    assert phi_b(x)[1] == pytest.approx(0.5 - 1e-3 / 3.0 + 1e-6 / 8.0, rel=1e-9)


@pytest.mark.parametrize(
    "kernel",
    [
        Abel(0.25),
        Abel(0.75),
        Exponential(1.0),
        RegularizedAbel(0.5, 1.0),
        MittagLeffler(0.5, 0.75),
        Polynomial(2.0),
    ],
)
def test_monotonicity_passes_for_admissible_kernels(kernel):
    """Test completely monotone kernels pass the sign checks."""
    report = monotonicity_check(kernel, GRID)
    assert report.passed, report.failures[:3]
    assert report.name == f"monotonicity[{kernel.label}]"


def test_monotonicity_fails_for_oscillating_kernel():
    """Test sin(t) fails with recorded failures."""
    report = monotonicity_check(CallableKernel(np.sin, "sin"), GRID)
    assert not report.passed
    assert report.failures
    assert {f["order"] for f in report.failures} >= {0}


def test_monotonicity_rejects_constant_kernel():
    """Test a constant kernel is rejected as non-decreasing-free."""
    report = monotonicity_check(CallableKernel(np.ones_like, "one"), GRID)
    assert not report.passed
    assert report.measured["nonconstant"] is False


def test_monotonicity_grid_validation():
    """Test an empty or nonpositive grid raises."""
    with pytest.raises(DomainError):
        monotonicity_check(Abel(0.5), np.array([]))
    with pytest.raises(DomainError):
        monotonicity_check(Abel(0.5), np.array([-1.0, 1.0]))


def test_laplace_transform_closed_forms():
    """Test closed-form Laplace transforms."""
    assert laplace_transform(Exponential(2.0), 1.0) == pytest.approx(1.0 / 3.0)
    assert laplace_transform(Abel(0.5), 4.0) == pytest.approx(0.5)
    assert laplace_transform(Dirac(), 3.0) == pytest.approx(1.0)
    with pytest.raises(NotImplementedError):
        laplace_transform(Polynomial(2.0), 1.0)


def test_strong_positivity_ratio():
    """Test the frequency ratio for the reference and the Dirac kernel."""
    omegas = np.geomspace(1e-2, 1e2, 25)
    assert np.allclose(strong_positivity_ratio(Exponential(1.0), omegas), 1.0)
    assert np.allclose(strong_positivity_ratio(Dirac(), omegas), 1.0 + omegas**2)
    assert np.all(strong_positivity_ratio(Abel(0.5), omegas) > 0.0)


def test_strong_positivity_form_reference_margin():
    """Test the reference kernel has zero margin at eta = 1."""
    y = np.concatenate([[0.0], np.sin(np.linspace(0.1, 3.0, 40))])
    forms = strong_positivity_form(Exponential(1.0), y, eta=1.0, dt=0.05)
    assert forms.margin(1.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        strong_positivity_form(Exponential(1.0), y, eta=-1.0, dt=0.05)


def test_soe_fit_abel():
    """Test a sum-of-exponentials fit of the Abel kernel."""
    approx = soe_fit(Abel(0.5), horizon=10.0, cutoff=0.01, tol=1e-4)
    assert approx.achieved_error <= 1e-4
    assert all(w > 0.0 for w in approx.weights)
    t = np.geomspace(0.01, 10.0, 50)
    assert np.allclose(approx(t), Abel(0.5)(t), rtol=1e-4)


def test_soe_fit_exponential_is_exact():
    """Test the exponential kernel is represented by itself."""
    approx = soe_fit(Exponential(3.0), horizon=5.0, cutoff=0.1)
    assert approx.terms == 1
    assert approx.rates == (3.0,)
    assert approx.achieved_error == 0.0


def test_soe_fit_failure_reports_best_attempt():
    """Test FitFailure when the term budget is too small."""
    with pytest.raises(FitFailure) as exc_info:
        soe_fit(Abel(0.5), horizon=10.0, cutoff=1e-3, tol=1e-12, max_terms=2)
    best = exc_info.value
    assert math.isfinite(best.achieved_error)
    # the best attempt misses either the tolerance or the term cap
    assert best.achieved_error > 1e-12 or best.terms > 2


def test_soe_fit_interval_validation():
    """Test cutoff must lie below horizon."""
    with pytest.raises(DomainError):
        soe_fit(Abel(0.5), horizon=1.0, cutoff=2.0)


def test_kernel_from_dict():
    """Test building kernels from config tables."""
    assert kernel_from_dict({"type": "abel", "alpha": 0.5}) == Abel(0.5)
    assert kernel_from_dict({"type": "dirac"}) == Dirac()
    assert kernel_from_dict({"type": "mittag_leffler", "alpha": 0.5, "beta": 1}) == MittagLeffler(
        0.5, 1.0
    )


@pytest.mark.parametrize(
    "entry",
    [
        {"type": "gauss"},
        {"type": "abel"},
        {"type": "abel", "alpha": 0.5, "beta": 1.0},
        {"type": "abel", "alpha": "half"},
        {"type": "abel", "alpha": 2.0},
    ],
)
def test_kernel_from_dict_rejects(entry):
    """Test invalid config tables raise DomainError."""
    with pytest.raises(DomainError):
        kernel_from_dict(entry)


def test_labels_and_round_trip():
    """Test labels and to_dict."""
    kernel = RegularizedAbel(0.5, 2.0)
    assert kernel.label == "regularized_abel(alpha=0.5, beta=2)"
    assert kernel_from_dict(kernel.to_dict()) == kernel
    assert Dirac().label == "dirac"


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.05, 0.95), t=st.floats(0.01, 50.0))
def test_abel_positive_and_decreasing(alpha, t):
    """Test Abel kernels are positive and decreasing."""
    kernel = Abel(alpha)
    assert kernel(t) > 0.0
    assert kernel(t * 1.5) < kernel(t)
