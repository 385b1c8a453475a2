"""
Tests for the energy functionals and the checks built on them.
"""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jmgt_sim.core.diagnostics import (
    CSV_COLUMNS,
    ConditionFails,
    EnergyReport,
    bootstrap_residual,
    default_eta_hat,
    dissipation_control_check,
    dissipation_D,
    dissipation_inequality_check,
    energy_identity_check,
    energy_summary,
    estimate_eta,
    growth_factor,
    identity_residuals,
    monotone_growth,
    plateau_check,
    strauss_bound,
    z_relation_check,
)
from jmgt_sim.core.exceptions import DegenerateDenominator, DiagnosticsError
from jmgt_sim.core.kernels import Abel, Dirac, Exponential
from jmgt_sim.core.solver import SolverConfig, SourceSpec, initialize, run
from jmgt_sim.core.spectral import BoxDomain, ModalField


@pytest.fixture
def domain():
    """The interval [0, pi] with 8 modes."""
    return BoxDomain((math.pi,), (8,))


def solve(domain, dt=0.01, T=1.0, kernel=None, sigma=0.0, source=None, amplitude=0.05):
    config = SolverConfig(
        tau=1.0,
        c=1.0,
        delta=0.5,
        sigma=sigma,
        kernel=kernel or Dirac(),
        dt=dt,
        T=T,
        domain=domain,
    )
    psi0 = ModalField.single_mode(domain, (1,), amplitude)
    psi2 = ModalField.single_mode(domain, (2,), 0.5 * amplitude)
    return run(config, psi0, psi2, source, eta_hat=1.0)


def make_report(t, E=1.0, D=0.0, **fields):
    values = dict(
        t=t,
        E1=E,
        E2=0.0,
        D=D,
        E=E,
        Y=E + D,
        linf_psi_t=1.0,
        h3_psi=1.0,
        h3_psi_t=1.0,
        h2_u=1.0,
        h3_z=0.0,
        picard_iters=0,
        dissipation_raw=D,
        h3_psi_sq_int=0.0,
        h3_psi_t_sq_int=0.0,
        memory_u=0.0,
        memory_z=0.0,
        remainder_1=0.0,
        remainder_2=0.0,
        delta=1.0,
        eta=2.0,
    )
    values.update(fields)
    return EnergyReport(**values)


def test_csv_row_follows_columns():
    """Test the CSV row matches the column order."""
    report = make_report(0.5, E=2.0, D=1.0, picard_iters=3)
    row = report.csv_row()
    assert len(row) == len(CSV_COLUMNS)
    assert row[0] == 0.5
    assert row[CSV_COLUMNS.index("Y")] == 3.0
    assert row[-1] == 3


def test_initial_energies_of_a_single_mode(domain):
    """Test E1(0) and E2(0) against the eigenvalue formula."""
    config = SolverConfig(
        tau=1.0, c=1.0, delta=0.5, sigma=0.0, kernel=Dirac(), dt=0.01, T=1.0, domain=domain
    )
    psi0 = ModalField.single_mode(domain, (2,), 0.1)
    trajectory = run(config, psi0, ModalField.zeros(domain), eta_hat=1.0, stride=100)
    first = trajectory.reports[0]
    # v(0) = -psi0 / tau gives z(0) = 0, u(0) = -psi0 and xi + tau psi = psi0
    lam = 4.0
    norm_sq = math.pi / 2.0
    assert first.E1 == pytest.approx(0.5 * lam**2 * 0.01 * norm_sq)
    assert first.E2 == pytest.approx(0.5 * lam**3 * 0.01 * norm_sq)
    assert first.D == 0.0
    assert first.boundary_residual is not None


def test_dissipation_requires_positive_eta(domain):
    """Test eta <= 0 raises DiagnosticsError."""
    config = SolverConfig(
        tau=1.0, c=1.0, delta=0.5, sigma=0.0, kernel=Dirac(), dt=0.01, T=1.0, domain=domain
    )
    state = initialize(config, ModalField.zeros(domain), ModalField.zeros(domain))
    with pytest.raises(DiagnosticsError):
        dissipation_D(state, config, 0.0)
    assert dissipation_D(state, config, 2.0) == 0.0


def test_energy_identity_linear_run(domain):
    """Test the summed energy identity on a linear Dirac run."""
    coarse = solve(domain, dt=0.02)
    fine = solve(domain, dt=0.01)
    check = energy_identity_check(coarse.reports, rtol=1e-4, refined=fine.reports)
    assert check.passed, check.measured
    assert identity_residuals(coarse.reports)[0] == 0.0


def test_energy_identity_with_memory_and_source(domain):
    """Test the identity with an Abel kernel and a decaying source."""
    source = SourceSpec.decaying_mode(domain, (1,), 1e-3, 1.0)
    trajectory = solve(domain, dt=0.01, kernel=Abel(0.5), source=source)
    assert trajectory.completed
    assert energy_identity_check(trajectory.reports, rtol=1e-3).passed


def test_energy_identity_nonlinear_run():
    """Test the summed identity with sigma = 1 on 32 modes and under step halving."""
    domain = BoxDomain((math.pi,), (32,))
    coarse = solve(domain, dt=4e-3, sigma=1.0)
    fine = solve(domain, dt=2e-3, sigma=1.0)
    assert coarse.completed and fine.completed
    check = energy_identity_check(coarse.reports, rtol=1e-4, refined=fine.reports)
    assert check.passed, check.measured
    assert check.measured["max_abs_residual_refined"] < check.measured["max_abs_residual"]


def test_energy_identity_flags_broken_series():
    """Test an energy jump fails the identity."""
    reports = [make_report(0.0, E=1.0), make_report(1.0, E=1.5)]
    check = energy_identity_check(reports, rtol=1e-4)
    assert not check.passed
    assert check.measured["max_abs_residual"] == pytest.approx(0.5)


def test_dissipation_inequality(domain):
    """Test the dissipation inequality on a Dirac run."""
    trajectory = solve(domain)
    check = dissipation_inequality_check(trajectory.reports, eta_hat=1.0)
    assert check.passed
    assert check.measured["max_excess"] <= 1e-4


def test_dissipation_inequality_failure_lists_times():
    """Test violations record their time."""
    reports = [
        make_report(0.0, E=1.0),
        make_report(1.0, E=1.0, dissipation_raw=1.0),
    ]
    check = dissipation_inequality_check(reports, eta_hat=1.0)
    assert not check.passed
    assert check.failures[0]["t"] == 1.0


def test_z_relation(domain):
    """Test z(0) = 0 and the supremum bound on a run."""
    check = z_relation_check(solve(domain))
    assert check.passed
    assert check.measured["h3_z0"] <= 1e-14


def test_dissipation_control_constants(domain):
    """Test the control constants stay finite under refinement."""
    coarse = solve(domain, dt=0.02)
    fine = solve(domain, dt=0.01)
    check = dissipation_control_check(coarse.reports, refined=fine.reports)
    assert check.passed, check.measured
    assert check.measured["c_linf"] >= 1.0


def test_bootstrap_stabilized():
    """Test a saturating energy passes the bootstrap check."""
    reports = [make_report(float(t), E=2.0 - math.exp(-t), D=0.0) for t in range(0, 101)]
    result = bootstrap_residual(reports, source_norm=0.0, datum_norm=0.0)
    assert result.passed
    assert result.window == (10.0, 100.0)
    assert result.denominator_data == 1.0
    check = result.to_check()
    assert check.name == "bootstrap_constant"
    assert check.measured["late_max"] == pytest.approx(2.0, rel=1e-6)


def test_bootstrap_growing():
    """Test a growing energy fails the bootstrap check."""
    reports = [make_report(float(t), E=1.0 + t) for t in range(0, 101)]
    result = bootstrap_residual(reports, source_norm=1.0, datum_norm=1.0)
    assert not result.passed
    assert result.late_max > result.early_max


def test_bootstrap_degenerate_denominator():
    """Test zero data raises DegenerateDenominator."""
    reports = [make_report(0.0, E=0.0), make_report(1.0, E=0.0)]
    with pytest.raises(DegenerateDenominator):
        bootstrap_residual(reports, source_norm=0.0, datum_norm=0.0)


def test_strauss_bound_holds():
    """Test the bound c1 / (1 - 1/kappa) when the condition holds."""
    report = strauss_bound(0.1, 1.0, 2.0)
    assert report.holds
    assert report.threshold == pytest.approx(0.25)
    assert report.bound == pytest.approx(0.2)
    assert report.margin > 0.0


def test_strauss_bound_fails():
    """Test the failing branch returns ConditionFails."""
    report = strauss_bound(1.0, 1.0, 2.0)
    assert isinstance(report, ConditionFails)
    assert not report.holds
    assert report.bound is None
    assert report.margin < 0.0


def test_strauss_bound_without_nonlinearity():
    """Test c2 = 0 always holds."""
    report = strauss_bound(5.0, 0.0, 3.0)
    assert report.holds
    assert report.bound == pytest.approx(7.5)


@pytest.mark.parametrize("args", [(0.0, 1.0, 2.0), (1.0, -1.0, 2.0), (1.0, 1.0, 1.0)])
def test_strauss_bound_rejects_arguments(args):
    """Test invalid constants raise DiagnosticsError."""
    with pytest.raises(DiagnosticsError):
        strauss_bound(*args)


@settings(max_examples=200, deadline=None)
@given(
    c1=st.floats(min_value=1e-3, max_value=10.0),
    c2=st.floats(min_value=1e-3, max_value=10.0),
    kappa=st.floats(min_value=1.1, max_value=4.0),
)
def test_strauss_barrier_property(c1, c2, kappa):
    """Test the bound sits below the minimiser of c1 + c2 M^kappa - M when the condition holds."""
    report = strauss_bound(c1, c2, kappa)
    minimiser = (kappa * c2) ** (-1.0 / (kappa - 1.0))
    gap = c1 + c2 * minimiser**kappa - minimiser
    if report.holds:
        assert report.bound <= minimiser * (1.0 + 1e-9)
        assert gap <= 1e-9 * max(1.0, minimiser)
    else:
        assert gap >= -1e-9 * max(1.0, minimiser)


@settings(max_examples=10_000, deadline=None)
@given(
    c1=st.floats(min_value=1e-3, max_value=10.0),
    c2=st.floats(min_value=1e-3, max_value=10.0),
    kappa=st.floats(min_value=1.1, max_value=4.0),
)
def test_strauss_bound_caps_the_iteration(c1, c2, kappa):
    """Test M -> c1 + c2 M^kappa started at c1 stays below the bound when the condition holds."""
    report = strauss_bound(c1, c2, kappa)
    if not report.holds:
        return
    M = c1
    for _ in range(1000):
        following = c1 + c2 * M**kappa
        if following == M:
            break
        M = following
    assert math.isfinite(M)
    assert M <= report.bound * (1.0 + 1e-12)


def test_plateau():
    """Test plateau detection on constant and growing series."""
    flat = [make_report(float(t), E=1.0, D=1.0) for t in range(11)]
    check = plateau_check(flat)
    assert check.passed
    assert check.name == "Y_plateau"
    assert check.measured["relative_change"] == 0.0

    growing = [make_report(float(t), E=1.0 + t) for t in range(11)]
    assert not plateau_check(growing, rtol=0.05).passed


def test_plateau_empty_window():
    """Test an empty window raises DiagnosticsError."""
    reports = [make_report(0.0), make_report(1.0)]
    with pytest.raises(DiagnosticsError):
        plateau_check(reports, start=5.0, end=6.0)


def test_growth_factor():
    """Test growth factors and the zero-initial conventions."""
    reports = [make_report(0.0, linf_psi_t=1.0), make_report(1.0, linf_psi_t=3.0), make_report(2.0, linf_psi_t=2.0)]
    assert growth_factor(reports) == 3.0
    assert not monotone_growth(reports)
    assert monotone_growth(reports[:2])

    from_zero = [make_report(0.0, linf_psi_t=0.0), make_report(1.0, linf_psi_t=1.0)]
    assert growth_factor(from_zero) == math.inf
    silent = [make_report(0.0, linf_psi_t=0.0), make_report(1.0, linf_psi_t=0.0)]
    assert growth_factor(silent) == 1.0


def test_empty_series_rejected():
    """Test empty report lists raise DiagnosticsError."""
    with pytest.raises(DiagnosticsError):
        growth_factor([])
    with pytest.raises(DiagnosticsError):
        energy_summary([])


def test_energy_summary(domain):
    """Test the run summary fields."""
    trajectory = solve(domain)
    summary = energy_summary(trajectory.reports)
    assert summary["t"] == pytest.approx(1.0)
    assert summary["sup_Y"] >= summary["Y"] * (1.0 - 1e-12)
    assert summary["boundary_residual"] is not None


def test_estimate_eta_exponential_reference():
    """Test the reference kernel has eta_hat = 1."""
    assert estimate_eta(Exponential(1.0), n=64, trials=50) == pytest.approx(1.0, rel=1e-8)


def test_estimate_eta_abel_positive():
    """Test the Abel kernel is strongly positive on the grid."""
    assert estimate_eta(Abel(0.5), n=64, trials=50) > 0.0


def test_estimate_eta_rejects_grid():
    """Test invalid estimate grids."""
    with pytest.raises(DiagnosticsError):
        estimate_eta(Abel(0.5), n=0)
    with pytest.raises(DiagnosticsError):
        estimate_eta(Abel(0.5), dt=0.0)


def test_default_eta_hat_dirac_and_cache():
    """Test the Dirac shortcut and caching of the estimate."""
    assert default_eta_hat(Dirac()) == 1.0
    kernel = Exponential(1.0)
    first = default_eta_hat(kernel)
    hits = default_eta_hat.cache_info().hits
    assert default_eta_hat(kernel) == first
    assert default_eta_hat.cache_info().hits == hits + 1
