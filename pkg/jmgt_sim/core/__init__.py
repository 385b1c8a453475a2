"""
Core components of jmgt-sim.
"""

from .exceptions import (
    JmgtError,
    KernelError,
    DomainError,
    DiracNotPointwise,
    ConvergenceFailure,
    FitFailure,
    QuadratureError,
    MomentQuadratureFailure,
    SpectralError,
    DomainMismatch,
    SolverError,
    PicardDivergence,
    NonFiniteError,
    ConfigError,
    UnsupportedKernel,
    DiagnosticsError,
    DegenerateDenominator,
    ConfigurationError,
    ParseError,
    ValidationError,
    ObserverError,
    StopRun,
    ScenarioRegistrationError,
    ScenarioNotFoundError,
)
from .kernels import (
    Abel,
    CallableKernel,
    Dirac,
    Exponential,
    KernelSpec,
    MittagLeffler,
    Polynomial,
    RegularizedAbel,
    SoeApprox,
    kernel_from_dict,
    mittag_leffler,
    soe_fit,
)
from .observer_base import ObserverBase
from .observer_registry import ObserverRegistry
from .observers import BlowupWatch, EnergyCsvWriter, ProgressLogger
from .reports import CheckReport
from .spectral import BoxDomain, ModalField
from .solver import SolverConfig, SourceSpec, Termination, Trajectory, initialize, run, step
from .diagnostics import EnergyReport

__all__ = [
    "JmgtError",
    "KernelError",
    "DomainError",
    "DiracNotPointwise",
    "ConvergenceFailure",
    "FitFailure",
    "QuadratureError",
    "MomentQuadratureFailure",
    "SpectralError",
    "DomainMismatch",
    "SolverError",
    "PicardDivergence",
    "NonFiniteError",
    "ConfigError",
    "UnsupportedKernel",
    "DiagnosticsError",
    "DegenerateDenominator",
    "ConfigurationError",
    "ParseError",
    "ValidationError",
    "ObserverError",
    "StopRun",
    "ScenarioRegistrationError",
    "ScenarioNotFoundError",
    "Abel",
    "CallableKernel",
    "Dirac",
    "Exponential",
    "KernelSpec",
    "MittagLeffler",
    "Polynomial",
    "RegularizedAbel",
    "SoeApprox",
    "kernel_from_dict",
    "mittag_leffler",
    "soe_fit",
    "ObserverBase",
    "ObserverRegistry",
    "BlowupWatch",
    "EnergyCsvWriter",
    "ProgressLogger",
    "CheckReport",
    "BoxDomain",
    "ModalField",
    "SolverConfig",
    "SourceSpec",
    "Termination",
    "Trajectory",
    "initialize",
    "run",
    "step",
    "EnergyReport",
]
