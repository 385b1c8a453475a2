"""Scenarios shipped with the command-line runner."""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from ..core import diagnostics
from ..core.exceptions import DomainError, FitFailure, ValidationError
from ..core.kernels import (
    Abel,
    Dirac,
    Exponential,
    KernelSpec,
    MittagLeffler,
    Polynomial,
    RegularizedAbel,
    kernel_from_dict,
    monotonicity_check,
    soe_fit,
    strong_positivity_ratio,
)
from ..core.observers import EnergyCsvWriter, ProgressLogger, format_value
from ..core.quadrature import (
    build_weights,
    convergence_orders,
    discrete_positivity_check,
    l2_control_check,
    weights_summary,
)
from ..core.reports import CheckReport
from ..core.solver import (
    SolverConfig,
    SourceSpec,
    Termination,
    Trajectory,
    manufactured_source,
    mode_ode_reference,
    run,
)
from ..core.spectral import ModalField, sobolev_seminorm
from .config import RunConfig
from .presets import initial_fields, source_spec
from .scenario_base import ENERGY_FILE, ScenarioBase, ScenarioResult, float_option
from .scenario_manager import ScenarioManager

logger = logging.getLogger(__name__)

T = TypeVar("T")

MONOTONICITY_GRID = np.geomspace(0.01, 10.0, 200)
FREQUENCY_GRID = np.geomspace(1e-3, 1e3, 121)

PARAMETER_GRID: Dict[str, Tuple[KernelSpec, ...]] = {
    "abel": (Abel(0.25), Abel(0.5), Abel(0.75)),
    "exponential": (Exponential(0.5), Exponential(1.0), Exponential(2.0)),
    "regularized_abel": (RegularizedAbel(0.25, 1.0), RegularizedAbel(0.5, 1.0), RegularizedAbel(0.75, 1.0)),
    "mittag_leffler": (MittagLeffler(0.25, 0.5), MittagLeffler(0.5, 0.75), MittagLeffler(0.75, 1.0)),
    "polynomial": (Polynomial(1.5), Polynomial(2.0), Polynomial(3.0)),
}


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def fan_out(func: Callable[[Any], T], items: Sequence[Any], max_workers: int) -> List[T]:
    """Apply ``func`` to independent items on a thread pool, keeping order."""
    if max_workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(max_workers, len(items))) as pool:
        return list(pool.map(func, items))


def simulate(
    solver: SolverConfig,
    psi0: ModalField,
    psi2: ModalField,
    source: SourceSpec,
    stride: int,
    csv_path: Optional[Path] = None,
    progress_every: int = 100,
) -> Trajectory:
    """One run with the CSV writer and progress logger attached."""
    observers: List[Any] = [ProgressLogger(progress_every)]
    if csv_path is not None:
        observers.append(EnergyCsvWriter(csv_path))
    return run(solver, psi0, psi2, source, observers=observers, stride=stride)


def termination_check(trajectory: Trajectory, name: str = "run_completed") -> CheckReport:
    return CheckReport(
        name=name,
        passed=trajectory.completed,
        tolerance="termination == completed",
        measured={
            "termination": trajectory.termination.value,
            "termination_time": trajectory.termination_time,
        },
        detail=trajectory.message,
    )


def standard_checks(
    trajectory: Trajectory,
    identity_rtol: float = 1e-4,
    inequality_rtol: float = 1e-4,
    suffix: str = "",
) -> List[CheckReport]:
    """Energy identity, dissipation inequality, z relation and dissipation control."""
    reports = trajectory.reports
    checks = [
        diagnostics.energy_identity_check(reports, rtol=identity_rtol),
        diagnostics.dissipation_inequality_check(reports, trajectory.eta_hat, rtol=inequality_rtol),
        diagnostics.z_relation_check(trajectory),
        diagnostics.dissipation_control_check(reports),
    ]
    if suffix:
        for check in checks:
            check.name = f"{check.name}[{suffix}]"
    return checks


def kernel_checks(
    kernel: KernelSpec,
    dt: float = 0.05,
    steps: int = 128,
    trials: int = 1000,
    seed: int = 0,
    soe_horizon: Optional[float] = None,
    soe_tol: float = 1e-6,
) -> List[CheckReport]:
    """Admissibility suite for one kernel.

    Monotonicity on ``[0.01, 10]``, discrete positivity over random
    rest-start signals, the strong-positivity estimate with the extraction
    inequality it implies, and optionally a sum-of-exponentials fit on
    ``[dt, soe_horizon]``.
    """
    label = kernel.label
    if isinstance(kernel, Dirac):
        return [
            CheckReport(
                name=f"admissibility[{label}]",
                passed=True,
                tolerance="n/a",
                detail="local damping; pointwise checks do not apply",
            )
        ]

    checks = [monotonicity_check(kernel, MONOTONICITY_GRID)]
    weights = build_weights(kernel, dt, steps)
    checks.append(discrete_positivity_check(weights, trials=trials, seed=seed))

    eta_hat = diagnostics.estimate_eta(kernel, dt=dt, n=steps, trials=min(trials, 500), seed=seed)
    measured: Dict[str, Any] = {"eta_hat": eta_hat, **weights_summary(weights)}
    measured["frequency_ratio_inf"] = float(np.min(strong_positivity_ratio(kernel, FREQUENCY_GRID)))
    checks.append(
        CheckReport(
            name=f"strong_positivity[{label}]",
            passed=eta_hat > 0.0,
            tolerance="eta_hat > 0 (grid estimate)",
            measured=measured,
        )
    )
    if eta_hat > 0.0:
        checks.append(l2_control_check(weights, eta_hat, seed=seed))

    if soe_horizon is not None:
        try:
            approx = soe_fit(kernel, soe_horizon, dt, tol=soe_tol)
            checks.append(
                CheckReport(
                    name=f"soe_fit[{label}]",
                    passed=approx.achieved_error <= soe_tol,
                    tolerance=f"max relative error <= {soe_tol:g}",
                    measured={"terms": approx.terms, "achieved_error": approx.achieved_error},
                )
            )
        except FitFailure as e:
            checks.append(
                CheckReport(
                    name=f"soe_fit[{label}]",
                    passed=False,
                    tolerance=f"max relative error <= {soe_tol:g}",
                    measured={"terms": e.terms, "achieved_error": e.achieved_error},
                    detail=str(e),
                )
            )
    return checks


def _write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


class _RunScenario(ScenarioBase):
    """Scenarios built around a single configured run."""

    required_sections = ["kernel"]
    options = {"identity_rtol": 1e-4, "inequality_rtol": 1e-4, "progress_every": 100}

    def inputs(self, config: RunConfig) -> Tuple[ModalField, ModalField, SourceSpec]:
        psi0, psi2 = initial_fields(config.domain, config.initial)
        return psi0, psi2, source_spec(config.domain, config.source)

    def single_run(self, config: RunConfig, out_dir: Path, result: ScenarioResult) -> Trajectory:
        psi0, psi2, source = self.inputs(config)
        csv_path = out_dir / ENERGY_FILE
        trajectory = simulate(
            config.solver,
            psi0,
            psi2,
            source,
            config.stride,
            csv_path,
            int(self.option(config, "progress_every")),
        )
        result.artifacts.append(csv_path)
        result.summary.update(trajectory.summary())
        result.summary["kernel"] = config.kernel.label
        result.summary["boundary_gradient_residual"] = trajectory.reports[0].boundary_residual
        return trajectory

    def add_standard(self, config: RunConfig, trajectory: Trajectory, result: ScenarioResult) -> None:
        for check in standard_checks(
            trajectory,
            float_option(self.option(config, "identity_rtol"), "identity_rtol"),
            float_option(self.option(config, "inequality_rtol"), "inequality_rtol"),
        ):
            result.add(check)


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


class Simulate(_RunScenario):
    name = "simulate"
    description = "Single run with energy CSV and the standard energy checks"

    def execute(self, config: RunConfig, out_dir: Path) -> ScenarioResult:
        result = ScenarioResult(self.name)
        trajectory = self.single_run(config, out_dir, result)
        result.add(termination_check(trajectory))
        self.add_standard(config, trajectory, result)
        return result


class SmallDataGlobal(_RunScenario):
    name = "small_data_global"
    description = "Small data run: completion, Y plateau and bootstrap constant"
    options = {
        **_RunScenario.options,
        "plateau_start": None,
        "plateau_rtol": 0.05,
        "bootstrap_rtol": 0.05,
    }

    def execute(self, config: RunConfig, out_dir: Path) -> ScenarioResult:
        result = ScenarioResult(self.name)
        trajectory = self.single_run(config, out_dir, result)
        result.add(termination_check(trajectory))
        if not trajectory.completed:
            result.failed = True
            logger.error(f"Small-data run terminated early: {trajectory.message}")
        self.add_standard(config, trajectory, result)

        reports = trajectory.reports
        start = self.option(config, "plateau_start")
        result.add(
            diagnostics.plateau_check(
                reports,
                start=None if start is None else float_option(start, "plateau_start"),
                rtol=float_option(self.option(config, "plateau_rtol"), "plateau_rtol"),
            )
        )
        source = trajectory.final_state.source
        source_norm = source.w11_norm(config.domain)
        datum_norm = reports[0].h3_psi
        result.summary["source_w11_norm"] = source_norm
        if reports[0].E + datum_norm**4 + source_norm**2 > 0.0:
            boot = diagnostics.bootstrap_residual(
                reports,
                source_norm,
                datum_norm,
                rtol=float_option(self.option(config, "bootstrap_rtol"), "bootstrap_rtol"),
            )
            result.add(boot.to_check())
        else:
            logger.info("Zero data: bootstrap constant skipped")
        return result


class InviscidGrowth(_RunScenario):
    name = "inviscid_growth"
    description = "Undamped growth of ||psi_t||_inf against the damped run"
    options = {
        **_RunScenario.options,
        "growth_threshold": 10.0,
        "contrast_delta": 0.5,
        "amplitude": None,
        "max_workers": 2,
    }

    def execute(self, config: RunConfig, out_dir: Path) -> ScenarioResult:
        result = ScenarioResult(self.name)
        amplitude = self.option(config, "amplitude")
        initial = config.initial
        if amplitude is not None:
            initial = replace(initial, amplitude=float_option(amplitude, "amplitude"))
        psi0, psi2 = initial_fields(config.domain, initial)
        source = source_spec(config.domain, config.source)
        contrast = float_option(self.option(config, "contrast_delta"), "contrast_delta")
        progress = int(self.option(config, "progress_every"))

        cases = [
            ("inviscid", replace(config.solver, delta=0.0), out_dir / ENERGY_FILE),
            ("damped", replace(config.solver, delta=contrast), out_dir / "energies_damped.csv"),
        ]

        def go(case: Tuple[str, SolverConfig, Path]) -> Trajectory:
            _, solver, path = case
            return simulate(solver, psi0, psi2, source, config.stride, path, progress)

        inviscid, damped = fan_out(go, cases, int(self.option(config, "max_workers")))
        result.artifacts.extend(path for _, _, path in cases)

        threshold = float_option(self.option(config, "growth_threshold"), "growth_threshold")
        growth_inviscid = _effective_growth(inviscid)
        growth_damped = _effective_growth(damped)
        measured_growth = diagnostics.growth_factor(inviscid.reports)
        # a non-finite termination is evidence of blow-up here
        blew_up = inviscid.termination in (Termination.NON_FINITE, Termination.PICARD_DIVERGENCE)
        grew = measured_growth >= threshold and diagnostics.monotone_growth(inviscid.reports)
        result.add(
            CheckReport(
                name="inviscid_growth",
                passed=blew_up or grew,
                tolerance=f"growth >= {threshold:g} or non-finite termination",
                measured={
                    "growth_factor": measured_growth,
                    "termination": inviscid.termination.value,
                    "termination_time": inviscid.termination_time,
                },
            )
        )
        if math.isinf(growth_inviscid) and math.isinf(growth_damped):
            smaller = damped.termination_time > inviscid.termination_time
        else:
            smaller = growth_damped < growth_inviscid
        result.add(
            CheckReport(
                name="damping_contrast",
                passed=smaller,
                tolerance="damped growth < inviscid growth",
                measured={
                    "growth_inviscid": growth_inviscid,
                    "growth_damped": growth_damped,
                    "delta_damped": contrast,
                },
            )
        )
        result.summary.update(
            {
                "kernel": config.kernel.label,
                "inviscid": inviscid.summary(),
                "damped": damped.summary(),
            }
        )
        return result


def _effective_growth(trajectory: Trajectory) -> float:
    if trajectory.termination in (Termination.NON_FINITE, Termination.PICARD_DIVERGENCE):
        return math.inf
    return diagnostics.growth_factor(trajectory.reports)


class KernelCompare(_RunScenario):
    name = "kernel_compare"
    description = "Same data under several kernels, one thread per run"
    options = {**_RunScenario.options, "kernels": None, "max_workers": 4}

    def validate(self, config: RunConfig) -> None:
        super().validate(config)
        self.kernels(config)

    def kernels(self, config: RunConfig) -> List[KernelSpec]:
        entries = self.option(config, "kernels")
        if entries is None:
            candidates = [config.kernel, Exponential(1.0), Dirac()]
            unique: List[KernelSpec] = []
            for kernel in candidates:
                if kernel not in unique:
                    unique.append(kernel)
            return unique
        if not isinstance(entries, list) or not entries:
            raise ValidationError("study.kernels must be a non-empty array of tables", key="study.kernels")
        try:
            return [kernel_from_dict(entry) for entry in entries]
        except (DomainError, TypeError, ValueError) as e:
            raise ValidationError(f"study.kernels: {e}", key="study.kernels") from e

    def execute(self, config: RunConfig, out_dir: Path) -> ScenarioResult:
        result = ScenarioResult(self.name)
        psi0, psi2, source = self.inputs(config)
        kernels = self.kernels(config)
        progress = int(self.option(config, "progress_every"))

        def go(indexed: Tuple[int, KernelSpec]) -> Trajectory:
            index, kernel = indexed
            history = "exact" if isinstance(kernel, Dirac) else config.solver.history
            solver = replace(config.solver, kernel=kernel, history=history)
            path = out_dir / f"energies_{index}_{kernel.kind}.csv"
            return simulate(solver, psi0, psi2, source, config.stride, path, progress)

        trajectories = fan_out(go, list(enumerate(kernels)), int(self.option(config, "max_workers")))
        rows = []
        for index, (kernel, trajectory) in enumerate(zip(kernels, trajectories)):
            tag = f"{index}:{kernel.label}"
            result.artifacts.append(out_dir / f"energies_{index}_{kernel.kind}.csv")
            result.add(termination_check(trajectory, name=f"run_completed[{tag}]"))
            for check in standard_checks(
                trajectory,
                float_option(self.option(config, "identity_rtol"), "identity_rtol"),
                float_option(self.option(config, "inequality_rtol"), "inequality_rtol"),
                suffix=tag,
            ):
                result.add(check)
            last = trajectory.reports[-1]
            rows.append(
                (
                    kernel.label,
                    trajectory.eta_hat,
                    last.t,
                    last.E,
                    last.D,
                    last.Y,
                    diagnostics.growth_factor(trajectory.reports),
                    trajectory.termination.value,
                )
            )
        table = _write_table(
            out_dir / "kernel_compare.csv",
            ("kernel", "eta_hat", "t", "E", "D", "Y", "growth", "termination"),
            rows,
        )
        result.artifacts.append(table)
        result.summary["kernels"] = [kernel.label for kernel in kernels]
        return result


class ConvergenceStudy(ScenarioBase):
    name = "convergence_study"
    description = "Time-step halving against an exact or reference solution"
    required_sections = ["kernel"]
    options = {
        "levels": 4,
        "reference": "manufactured",
        "min_order": 1.8,
        "mode": None,
        "max_workers": 4,
    }

    def validate(self, config: RunConfig) -> None:
        super().validate(config)
        reference = self.option(config, "reference")
        kernel = config.kernel
        if reference == "manufactured":
            allowed: Tuple[type, ...] = (Dirac, Exponential, Abel)
        elif reference == "ode":
            allowed = (Dirac, Exponential)
        else:
            raise ValidationError(
                f"study.reference must be 'manufactured' or 'ode', got {reference!r}",
                key="study.reference",
            )
        if not isinstance(kernel, allowed):
            raise ValidationError(
                f"{reference} reference not available for {kernel.label}", key="kernel"
            )
        levels = self.option(config, "levels")
        if not isinstance(levels, int) or levels < 2:
            raise ValidationError("study.levels must be an integer >= 2", key="study.levels")

    def execute(self, config: RunConfig, out_dir: Path) -> ScenarioResult:
        result = ScenarioResult(self.name)
        base = config.solver
        if base.sigma != 0.0:
            logger.info("Convergence study runs the linear problem (sigma = 0)")
            base = replace(base, sigma=0.0)
        mode = tuple(self.option(config, "mode") or config.initial.k)
        levels = int(self.option(config, "levels"))
        reference = self.option(config, "reference")
        steps = [base.dt / 2**i for i in range(levels)]

        def go(dt: float) -> float:
            solver = replace(base, dt=dt)
            if reference == "manufactured":
                return _manufactured_error(solver, mode)
            return _ode_error(solver, mode, config)

        errors = fan_out(go, steps, int(self.option(config, "max_workers")))
        orders = convergence_orders(errors)
        rows = [(dt, err, "" if i == 0 else orders[i - 1]) for i, (dt, err) in enumerate(zip(steps, errors))]
        table = _write_table(out_dir / "convergence.csv", ("dt", "error", "order"), rows)
        result.artifacts.append(table)

        min_order = float_option(self.option(config, "min_order"), "min_order")
        resolved = [
            order
            for order, fine in zip(orders, errors[1:])
            if fine > 1e-13 * max(1.0, errors[0])
        ]
        observed = min(resolved) if resolved else math.inf
        result.add(
            CheckReport(
                name="convergence_order",
                passed=bool(np.all(np.isfinite(errors))) and observed >= min_order,
                tolerance=f"observed order >= {min_order:g}",
                measured={
                    "dt": steps,
                    "errors": errors,
                    "orders": list(orders),
                    "min_observed_order": observed,
                },
                detail=f"{reference} reference, mode {mode}, kernel {base.kernel.label}",
            )
        )
        result.summary.update({"kernel": base.kernel.label, "reference": reference, "tau": base.tau})
        return result


def _manufactured_error(solver: SolverConfig, mode: Tuple[int, ...]) -> float:
    case = manufactured_source(solver, mode)
    trajectory = run(solver, case.psi0, case.psi2, case.source, stride=max(1, solver.n_steps))
    if not trajectory.completed:
        return math.inf
    state = trajectory.final_state
    return sobolev_seminorm(state.psi - case.exact(state.t), 0.0)


def _ode_error(solver: SolverConfig, mode: Tuple[int, ...], config: RunConfig) -> float:
    amplitude = config.initial.amplitude or 1.0
    psi2_amplitude = config.initial.psi2_amplitude
    domain = solver.domain
    psi0 = ModalField.single_mode(domain, mode, amplitude)
    psi2 = ModalField.single_mode(domain, mode, psi2_amplitude)
    trajectory = run(solver, psi0, psi2, SourceSpec.none(), stride=max(1, solver.n_steps))
    if not trajectory.completed:
        return math.inf
    t_final = trajectory.final_state.t
    reference = mode_ode_reference(
        solver, mode, t_final, psi0=amplitude, psi2=psi2_amplitude, samples=np.array([t_final])
    )
    index = tuple(int(v) - 1 for v in mode)
    return abs(float(trajectory.final_state.psi.coeffs[index]) - float(reference.psi[-1]))


class PositivitySuite(ScenarioBase):
    name = "positivity_suite"
    description = "Monotonicity and positivity checks over the kernel parameter grid"
    options = {
        "families": list(PARAMETER_GRID),
        "dt": 0.05,
        "steps": 128,
        "trials": 1000,
        "include_config_kernel": True,
        "max_workers": 4,
    }

    def validate(self, config: RunConfig) -> None:
        super().validate(config)
        families = self.option(config, "families")
        if not isinstance(families, list) or any(f not in PARAMETER_GRID for f in families):
            raise ValidationError(
                f"study.families must list kernel families from {sorted(PARAMETER_GRID)}",
                key="study.families",
            )

    def execute(self, config: RunConfig, out_dir: Path) -> ScenarioResult:
        result = ScenarioResult(self.name)
        kernels: List[KernelSpec] = [
            kernel for family in self.option(config, "families") for kernel in PARAMETER_GRID[family]
        ]
        if self.option(config, "include_config_kernel") and config.kernel not in kernels:
            kernels.append(config.kernel)
        dt = float_option(self.option(config, "dt"), "dt")
        steps = int(self.option(config, "steps"))
        trials = int(self.option(config, "trials"))

        def go(kernel: KernelSpec) -> List[CheckReport]:
            return kernel_checks(kernel, dt=dt, steps=steps, trials=trials, seed=config.seed)

        for checks in fan_out(go, kernels, int(self.option(config, "max_workers"))):
            for check in checks:
                result.add(check)
        result.summary["kernels"] = [kernel.label for kernel in kernels]
        return result


def check_kernel(config: RunConfig) -> ScenarioResult:
    """Admissibility suite plus SoE fit for the configured kernel only."""
    result = ScenarioResult("check_kernel")
    kernel = config.kernel
    checks = kernel_checks(
        kernel,
        dt=config.solver.dt,
        steps=max(1, min(config.solver.n_steps, 1024)),
        seed=config.seed,
        soe_horizon=max(config.solver.T, 10.0 * config.solver.dt),
        soe_tol=config.solver.soe_tol,
    )
    for check in checks:
        result.add(check)
    result.summary["kernel"] = kernel.label
    return result


SCENARIO_CLASSES = (
    Simulate,
    SmallDataGlobal,
    InviscidGrowth,
    KernelCompare,
    ConvergenceStudy,
    PositivitySuite,
)


def default_manager(log_level: str = "INFO") -> ScenarioManager:
    """Manager with every shipped scenario registered."""
    manager = ScenarioManager(log_level=log_level)
    for scenario_class in SCENARIO_CLASSES:
        manager.register(scenario_class)
    return manager
