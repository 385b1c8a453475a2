"""Energy functionals and the inequality checks built on them.

Reports are computed from :class:`~jmgt_sim.core.solver.SolverState` objects
at every recorded step; the checks operate on the resulting report series
and are pure functions, safe to call from several threads at once.
"""

import functools
import logging
import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .exceptions import DegenerateDenominator, DiagnosticsError
from .kernels import Dirac, Exponential, KernelSpec
from .quadrature import build_weights, quadratic_form_matrix
from .reports import CheckReport
from .spectral import boundary_gradient_residual, linf_norm, sobolev_seminorm

if TYPE_CHECKING:
    from .solver import SolverConfig, SolverState, Trajectory

logger = logging.getLogger(__name__)

ETA_DT = 0.05
ETA_STEPS = 256
ETA_TRIALS = 200

CSV_COLUMNS = ("t", "E1", "E2", "D", "Y", "linf_psi_t", "h3_psi", "h3_psi_t", "picard_iters")


@dataclass(frozen=True)
class EnergyReport:
    """Energies, norms and time integrals at one recorded step.

    ``E`` is the running supremum of ``E1 + E2`` over recorded steps and
    ``D = (delta / eta) * dissipation_raw``; both are nondecreasing along a
    series. The ``h*`` entries are L2 norms: ``h3_psi = ||grad Lap psi||``,
    ``h3_psi_t = ||grad Lap psi_t||``, ``h2_u = ||Lap(tau psi_tt + psi_t)||``
    and ``h3_z = ||grad Lap(tau psi_t + psi)||``.
    """

    t: float
    E1: float
    E2: float
    D: float
    E: float
    Y: float
    linf_psi_t: float
    h3_psi: float
    h3_psi_t: float
    h2_u: float
    h3_z: float
    picard_iters: int
    dissipation_raw: float
    h3_psi_sq_int: float
    h3_psi_t_sq_int: float
    memory_u: float
    memory_z: float
    remainder_1: float
    remainder_2: float
    delta: float
    eta: float
    sup_h3_psi: float = 0.0
    sup_h3_z: float = 0.0
    boundary_residual: Optional[float] = None

    def csv_row(self) -> Tuple[Any, ...]:
        return tuple(getattr(self, name) for name in CSV_COLUMNS)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------


def energy_E1(state: "SolverState", config: "SolverConfig") -> float:
    """``1/2 (||Lap(psi_t + tau psi_tt)||^2 + c^2 ||grad Lap(psi + tau psi_t)||^2)``."""
    u = state.v + config.tau * state.w
    z = state.psi + config.tau * state.v
    return 0.5 * (sobolev_seminorm(u, 2) ** 2 + config.c2 * sobolev_seminorm(z, 3) ** 2)


def energy_E2(state: "SolverState", config: "SolverConfig") -> float:
    """``1/2 (||Lap(psi + tau psi_t)||^2 + c^2 ||grad Lap(xi + tau psi)||^2)``."""
    z = state.psi + config.tau * state.v
    y = state.xi + config.tau * state.psi
    return 0.5 * (sobolev_seminorm(z, 2) ** 2 + config.c2 * sobolev_seminorm(y, 3) ** 2)


def dissipation_D(state: "SolverState", config: "SolverConfig", eta: float) -> float:
    """``(delta / eta) * int_0^t ||grad Lap(tau psi_t + psi)||^2`` (trapezoidal)."""
    if not eta > 0.0:
        raise DiagnosticsError(f"eta must be positive, got {eta}")
    return config.delta / eta * state.acc.dissipation


def energy_report(
    state: "SolverState",
    config: "SolverConfig",
    eta: float,
    previous: Optional[EnergyReport],
    initial: bool = False,
) -> EnergyReport:
    """Build the report for ``state``, folding running suprema from ``previous``.

    With ``initial=True`` the boundary-gradient residual of ``psi0`` is
    recorded as well.
    """
    e1 = energy_E1(state, config)
    e2 = energy_E2(state, config)
    d = dissipation_D(state, config, eta)
    u = state.v + config.tau * state.w
    z = state.psi + config.tau * state.v
    h3_psi = sobolev_seminorm(state.psi, 3)
    h3_z = sobolev_seminorm(z, 3)
    sup_energy = e1 + e2 if previous is None else max(previous.E, e1 + e2)
    acc = state.acc
    return EnergyReport(
        t=state.t,
        E1=e1,
        E2=e2,
        D=d,
        E=sup_energy,
        Y=sup_energy + d,
        linf_psi_t=linf_norm(state.v),
        h3_psi=h3_psi,
        h3_psi_t=sobolev_seminorm(state.v, 3),
        h2_u=sobolev_seminorm(u, 2),
        h3_z=h3_z,
        picard_iters=state.picard_iterations,
        dissipation_raw=acc.dissipation,
        h3_psi_sq_int=acc.h3_psi_sq,
        h3_psi_t_sq_int=acc.h3_psi_t_sq,
        memory_u=acc.memory_u,
        memory_z=acc.memory_z,
        remainder_1=acc.remainder_1,
        remainder_2=acc.remainder_2,
        delta=config.delta,
        eta=eta,
        sup_h3_psi=h3_psi if previous is None else max(previous.sup_h3_psi, h3_psi),
        sup_h3_z=h3_z if previous is None else max(previous.sup_h3_z, h3_z),
        boundary_residual=boundary_gradient_residual(state.psi0) if initial else None,
    )


def _series(reports: Sequence[EnergyReport], name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in reports], dtype=float)


def _require(reports: Sequence[EnergyReport]) -> None:
    if not reports:
        raise DiagnosticsError("empty report series")


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Elementwise ``num / den`` with ``0 / 0 = 0``."""
    out = np.zeros_like(num, dtype=float)
    nonzero = den > 0.0
    out[nonzero] = num[nonzero] / den[nonzero]
    out[~nonzero & (num > 0.0)] = math.inf
    return out


# ---------------------------------------------------------------------------
# Strong positivity constant
# ---------------------------------------------------------------------------


def estimate_eta(
    kernel: KernelSpec,
    dt: float = ETA_DT,
    n: int = ETA_STEPS,
    trials: int = ETA_TRIALS,
    seed: int = 0,
) -> float:
    """Numeric strong-positivity constant ``eta_hat`` with ``Q_K >= eta_hat Q_exp``.

    Two estimates are combined and the smaller one returned: the minimum of
    ``Q_K(y) / Q_exp(y)`` over ``trials`` random rest-start signals, and the
    smallest generalized eigenvalue of the two symmetric form matrices, which
    is the largest ``eta_hat`` valid for every signal on the grid. Both are
    estimates on a finite grid.
    """
    if isinstance(kernel, Dirac):
        return 1.0
    if n < 1 or trials < 1 or not dt > 0.0:
        raise DiagnosticsError(f"invalid eta estimate grid: dt={dt}, n={n}, trials={trials}")
    s_kernel = quadratic_form_matrix(build_weights(kernel, dt, n))
    s_exp = quadratic_form_matrix(build_weights(Exponential(1.0), dt, n))

    rng = np.random.default_rng(seed)
    ys = rng.choice((-1.0, 1.0), size=(trials, n))
    q_kernel = np.einsum("ij,jk,ik->i", ys, s_kernel, ys)
    q_exp = np.einsum("ij,jk,ik->i", ys, s_exp, ys)
    trial_min = float(np.min(q_kernel / q_exp))

    try:
        rayleigh = float(
            linalg.eigh(s_kernel, s_exp, eigvals_only=True, subset_by_index=[0, 0])[0]
        )
    except linalg.LinAlgError as e:
        logger.warning(f"Generalized eigenproblem failed for {kernel.label}: {e}")
        rayleigh = trial_min
    eta_hat = min(trial_min, rayleigh)
    logger.info(
        f"eta estimate for {kernel.label}: trials {trial_min:.6g}, "
        f"rayleigh {rayleigh:.6g} (dt={dt:g}, N={n})"
    )
    return eta_hat


@functools.lru_cache(maxsize=64)
def default_eta_hat(kernel: KernelSpec) -> float:
    """Cached :func:`estimate_eta` on the default grid; ``1`` for the Dirac kernel."""
    if isinstance(kernel, Dirac):
        return 1.0
    eta_hat = estimate_eta(kernel)
    if not eta_hat > 0.0:
        logger.warning(f"Non-positive eta estimate {eta_hat:g} for {kernel.label}")
    return eta_hat


# ---------------------------------------------------------------------------
# Bootstrap and barrier
# ---------------------------------------------------------------------------


@dataclass
class BootstrapReport:
    """Pointwise minimal constant of the bootstrap inequality.

    ``c_star[i] = (E + D) / (E(0) + ||grad Lap psi0||^4 + ||f~||^2 + D^2)``
    at ``times[i]``.
    """

    times: np.ndarray
    c_star: np.ndarray
    sup: float
    window: Tuple[float, float]
    early_max: float
    late_max: float
    passed: bool
    denominator_data: float

    def to_check(self) -> CheckReport:
        return CheckReport(
            name="bootstrap_constant",
            passed=self.passed,
            tolerance="late-window max of C*(t) does not exceed early-window max",
            measured={
                "sup_c_star": self.sup,
                "window_start": self.window[0],
                "window_end": self.window[1],
                "early_max": self.early_max,
                "late_max": self.late_max,
            },
        )


def bootstrap_residual(
    reports: Sequence[EnergyReport],
    source_norm: float,
    datum_norm: float,
    window: Optional[Tuple[float, float]] = None,
    rtol: float = 0.05,
) -> BootstrapReport:
    """Minimal constant ``C*(t)`` of the bootstrap inequality over a run.

    The check passes when ``C*`` has stabilized: its maximum over the second
    half of ``window`` exceeds the maximum over the first half by at most
    ``rtol``. ``window`` defaults to ``[T/10, T]``.

    Raises:
        DegenerateDenominator: If ``E(0)``, ``datum_norm`` and ``source_norm``
            are all zero.
    """
    _require(reports)
    data = reports[0].E + datum_norm**4 + source_norm**2
    if data == 0.0:
        raise DegenerateDenominator("E(0), ||grad Lap psi0|| and ||f~|| are all zero")
    times = _series(reports, "t")
    energy = _series(reports, "E")
    diss = _series(reports, "D")
    c_star = (energy + diss) / (data + diss**2)

    horizon = float(times[-1])
    start, end = window if window is not None else (horizon / 10.0, horizon)
    middle = 0.5 * (start + end)
    early = c_star[(times >= start) & (times <= middle)]
    late = c_star[(times > middle) & (times <= end)]
    early_max = float(np.max(early)) if early.size else float(c_star[0])
    late_max = float(np.max(late)) if late.size else early_max
    passed = bool(np.all(np.isfinite(c_star))) and late_max <= early_max * (1.0 + rtol)
    if not passed:
        logger.warning(f"Bootstrap constant still growing: {early_max:.4g} -> {late_max:.4g}")
    return BootstrapReport(
        times=times,
        c_star=c_star,
        sup=float(np.max(c_star)),
        window=(start, end),
        early_max=early_max,
        late_max=late_max,
        passed=passed,
        denominator_data=data,
    )


@dataclass(frozen=True)
class StraussReport:
    """Smallness condition of the barrier lemma ``M <= c1 + c2 M^kappa``."""

    c1: float
    c2: float
    kappa: float
    lhs: float
    threshold: float
    bound: Optional[float]

    @property
    def holds(self) -> bool:
        return self.bound is not None

    @property
    def margin(self) -> float:
        """``threshold - lhs``; positive exactly when the condition holds."""
        return self.threshold - self.lhs


@dataclass(frozen=True)
class ConditionFails(StraussReport):
    """Returned by :func:`strauss_bound` when the smallness condition fails."""


def strauss_bound(c1: float, c2: float, kappa: float) -> StraussReport:
    """Evaluate ``c1 c2^(1/(kappa-1)) < (1 - 1/kappa) kappa^(-1/(kappa-1))``.

    When it holds, a continuous ``M >= 0`` with ``M(0) <= c1`` and
    ``M <= c1 + c2 M^kappa`` stays below ``c1 / (1 - 1/kappa)``.
    """
    if not c1 > 0.0 or c2 < 0.0 or not kappa > 1.0:
        raise DiagnosticsError(f"need c1 > 0, c2 >= 0, kappa > 1; got {c1}, {c2}, {kappa}")
    exponent = 1.0 / (kappa - 1.0)
    lhs = c1 * c2**exponent
    threshold = (1.0 - 1.0 / kappa) * kappa ** (-exponent)
    if lhs < threshold:
        return StraussReport(c1, c2, kappa, lhs, threshold, c1 / (1.0 - 1.0 / kappa))
    return ConditionFails(c1, c2, kappa, lhs, threshold, None)


# ---------------------------------------------------------------------------
# Checks over report series
# ---------------------------------------------------------------------------


def identity_residuals(reports: Sequence[EnergyReport]) -> np.ndarray:
    """``E1 + E2 + M1 + M2 - E1(0) - E2(0) - R1 - R2`` at every record."""
    _require(reports)
    first = reports[0]
    return np.array(
        [
            r.E1 + r.E2 + r.memory_u + r.memory_z - first.E1 - first.E2 - r.remainder_1 - r.remainder_2
            for r in reports
        ]
    )


def energy_identity_check(
    reports: Sequence[EnergyReport],
    rtol: float = 1e-4,
    refined: Optional[Sequence[EnergyReport]] = None,
) -> CheckReport:
    """Residual of the two summed energy identities.

    Passes when ``max |residual| <= rtol * max(E1(0), 1)``; with a ``refined``
    series (half the step) the refined residual must not be larger.
    """
    residual = identity_residuals(reports)
    scale = max(reports[0].E1, 1.0)
    worst = float(np.max(np.abs(residual)))
    measured: Dict[str, Any] = {"max_abs_residual": worst, "scale": scale}
    passed = bool(np.isfinite(worst)) and worst <= rtol * scale
    if refined is not None:
        worst_fine = float(np.max(np.abs(identity_residuals(refined))))
        measured["max_abs_residual_refined"] = worst_fine
        if worst_fine > 0.0 and worst > 0.0:
            measured["observed_order"] = math.log(worst / worst_fine, 2)
        passed = passed and worst_fine <= worst * (1.0 + 1e-9) + 1e-14 * scale
    if not passed:
        logger.warning(f"Energy identity residual {worst:.3e} exceeds {rtol:g} * {scale:g}")
    return CheckReport(
        name="energy_identity",
        passed=passed,
        tolerance=f"|residual| <= {rtol:g} * max(E1(0), 1)",
        measured=measured,
    )


def dissipation_inequality_check(
    reports: Sequence[EnergyReport],
    eta_hat: float,
    rtol: float = 1e-4,
) -> CheckReport:
    """``E1 + E2 + (delta eta_hat / 2) int ||grad Lap z||^2 <= E1(0) + E2(0) + R1 + R2``.

    The right-hand side is allowed to fall short by ``rtol * max(E1(0) + E2(0), 1)``.
    """
    _require(reports)
    first = reports[0]
    scale = max(first.E1 + first.E2, 1.0)
    failures: List[Dict[str, Any]] = []
    worst = -math.inf
    for r in reports:
        lhs = r.E1 + r.E2 + 0.5 * r.delta * eta_hat * r.dissipation_raw
        rhs = first.E1 + first.E2 + r.remainder_1 + r.remainder_2
        excess = lhs - rhs
        worst = max(worst, excess)
        if excess > rtol * scale:
            failures.append({"t": r.t, "lhs": lhs, "rhs": rhs})
    return CheckReport(
        name="dissipation_inequality",
        passed=not failures,
        tolerance=f"lhs - rhs <= {rtol:g} * max(E(0), 1)",
        measured={"eta_hat": eta_hat, "max_excess": worst, "scale": scale},
        failures=failures,
    )


def _control_constants(reports: Sequence[EnergyReport]) -> Dict[str, float]:
    psi0_sq = reports[0].h3_psi ** 2
    diss = _series(reports, "dissipation_raw")
    sup_sq = np.maximum.accumulate(_series(reports, "h3_psi") ** 2)
    psi_int = _series(reports, "h3_psi_sq_int")
    psi_t_int = _series(reports, "h3_psi_t_sq_int")
    den = diss + psi0_sq
    return {
        "c_linf": float(np.max(_ratio(sup_sq, den))),
        "c_l2": float(np.max(_ratio(psi_int, den))),
        "c_psi_t": float(np.max(_ratio(psi_t_int, diss + psi_int))),
    }


def dissipation_control_check(
    reports: Sequence[EnergyReport],
    refined: Optional[Sequence[EnergyReport]] = None,
    growth: float = 2.0,
) -> CheckReport:
    """Empirical constants extracting ``grad Lap psi`` and ``grad Lap psi_t`` from ``D``.

    ``c_linf`` and ``c_l2`` bound ``sup ||grad Lap psi||^2`` and
    ``int ||grad Lap psi||^2`` by ``int ||grad Lap z||^2 + ||grad Lap psi0||^2``;
    ``c_psi_t`` bounds ``int ||grad Lap psi_t||^2`` by
    ``int ||grad Lap z||^2 + int ||grad Lap psi||^2``. With a ``refined``
    series each constant may grow at most by ``growth``.
    """
    _require(reports)
    constants = _control_constants(reports)
    measured: Dict[str, Any] = dict(constants)
    passed = all(math.isfinite(v) for v in constants.values())
    if refined is not None:
        fine = _control_constants(refined)
        measured.update({f"{k}_refined": v for k, v in fine.items()})
        passed = passed and all(
            math.isfinite(fine[k]) and fine[k] <= growth * constants[k] + 1e-12 for k in constants
        )
    return CheckReport(
        name="dissipation_control",
        passed=passed,
        tolerance="finite constants" + (f", refined <= {growth:g} x coarse" if refined else ""),
        measured=measured,
    )


def z_relation_check(trajectory: "Trajectory", atol: float = 1e-8) -> CheckReport:
    """``z(0) = 0`` and ``sup ||grad Lap psi|| <= sup ||grad Lap z|| + ||grad Lap psi0||``.

    ``z(0)`` is compared against a few units of rounding of ``psi0``; suprema
    are taken over recorded steps.
    """
    reports = trajectory.reports
    _require(reports)
    first, last = reports[0], reports[-1]
    z0_bound = 8.0 * np.finfo(float).eps * max(first.h3_psi, 1.0)
    z0_ok = first.h3_z <= z0_bound
    bound = last.sup_h3_z + first.h3_psi + atol
    bound_ok = last.sup_h3_psi <= bound
    failures: List[Dict[str, Any]] = []
    if not z0_ok:
        failures.append({"t": 0.0, "h3_z0": first.h3_z})
    if not bound_ok:
        failures.append({"t": last.t, "sup_h3_psi": last.sup_h3_psi, "bound": bound})
    return CheckReport(
        name="z_relation",
        passed=z0_ok and bound_ok,
        tolerance=f"z(0) at rounding level, bound slack {atol:g}",
        measured={
            "h3_z0": first.h3_z,
            "sup_h3_psi": last.sup_h3_psi,
            "sup_h3_z": last.sup_h3_z,
            "h3_psi0": first.h3_psi,
        },
        failures=failures,
    )


def plateau_check(
    reports: Sequence[EnergyReport],
    start: Optional[float] = None,
    end: Optional[float] = None,
    rtol: float = 0.05,
    quantity: str = "Y",
) -> CheckReport:
    """Relative change of ``quantity`` over ``[start, end]`` (default second half)."""
    _require(reports)
    times = _series(reports, "t")
    values = _series(reports, quantity)
    start = 0.5 * times[-1] if start is None else start
    end = times[-1] if end is None else end
    selected = values[(times >= start) & (times <= end)]
    if selected.size == 0:
        raise DiagnosticsError(f"no records in [{start:g}, {end:g}]")
    top = float(np.max(np.abs(selected)))
    change = float(np.max(selected) - np.min(selected)) / top if top > 0.0 else 0.0
    finite = bool(np.all(np.isfinite(values)))
    return CheckReport(
        name=f"{quantity}_plateau",
        passed=finite and change < rtol,
        tolerance=f"relative change over [{start:g}, {end:g}] < {rtol:g}",
        measured={"relative_change": change, "sup": float(np.max(values)), "records": int(selected.size)},
    )


def growth_factor(reports: Sequence[EnergyReport], quantity: str = "linf_psi_t") -> float:
    """``max_t q(t) / q(0)`` for a report attribute (``inf`` if ``q(0) = 0 < max q``)."""
    _require(reports)
    values = _series(reports, quantity)
    initial = values[0]
    top = float(np.nanmax(values))
    if initial > 0.0:
        return top / initial
    return math.inf if top > 0.0 else 1.0


def monotone_growth(reports: Sequence[EnergyReport], quantity: str = "linf_psi_t") -> bool:
    """True when the running maximum of ``quantity`` is reached at the last record."""
    values = _series(reports, quantity)
    return bool(values.size and values[-1] >= np.max(values))


def energy_summary(reports: Sequence[EnergyReport]) -> Dict[str, Any]:
    _require(reports)
    last = reports[-1]
    return {
        "t": last.t,
        "E": last.E,
        "D": last.D,
        "Y": last.Y,
        "sup_Y": float(np.max(_series(reports, "Y"))),
        "max_picard": int(np.max(_series(reports, "picard_iters"))),
        "boundary_residual": reports[0].boundary_residual,
    }
