"""
jmgt-sim - Spectral Galerkin simulator for the fractionally damped JMGT equation.

jmgt-sim advances the Jordan-Moore-Gibson-Thompson equation with a memory
damping term on box domains with Dirichlet conditions, and checks the energy
identities and inequalities that govern its global behaviour.

Features:
- Memory kernels (Abel, exponential, regularized Abel, Mittag-Leffler,
  polynomial, Dirac) with admissibility checks
- Product-integration convolution weights and sum-of-exponentials history
- Sine-basis Galerkin discretisation with dealiased nonlinearity
- Crank-Nicolson stepping with Picard iteration
- Energy, dissipation and bootstrap diagnostics
- Observer hooks on run events with the @observe decorator
- Config-driven scenarios with CSV and verdict output

Example:
    import math
    from jmgt_sim import Abel, BoxDomain, ModalField, SolverConfig, run

    domain = BoxDomain(lengths=(math.pi,), modes=(16,))
    config = SolverConfig(tau=1.0, c=1.0, delta=0.5, sigma=1.0,
                          kernel=Abel(0.5), dt=1e-2, T=1.0, domain=domain)
    psi0 = ModalField.single_mode(domain, (1,), 1e-2)
    trajectory = run(config, psi0, ModalField.zeros(domain))
    print(trajectory.reports[-1].Y)
"""

__version__ = "0.1.0"
__license__ = "MIT"

from .core import (
    Abel,
    BlowupWatch,
    BoxDomain,
    CallableKernel,
    CheckReport,
    ConfigError,
    ConfigurationError,
    DegenerateDenominator,
    Dirac,
    DomainError,
    EnergyCsvWriter,
    EnergyReport,
    Exponential,
    JmgtError,
    KernelSpec,
    MittagLeffler,
    ModalField,
    NonFiniteError,
    ObserverBase,
    ObserverError,
    ObserverRegistry,
    ParseError,
    PicardDivergence,
    Polynomial,
    ProgressLogger,
    RegularizedAbel,
    SolverConfig,
    SourceSpec,
    StopRun,
    Termination,
    Trajectory,
    ValidationError,
    run,
)
from .utils import observe

__all__ = [
    "Abel",
    "BlowupWatch",
    "BoxDomain",
    "CallableKernel",
    "CheckReport",
    "ConfigError",
    "ConfigurationError",
    "DegenerateDenominator",
    "Dirac",
    "DomainError",
    "EnergyCsvWriter",
    "EnergyReport",
    "Exponential",
    "JmgtError",
    "KernelSpec",
    "MittagLeffler",
    "ModalField",
    "NonFiniteError",
    "ObserverBase",
    "ObserverError",
    "ObserverRegistry",
    "ParseError",
    "PicardDivergence",
    "Polynomial",
    "ProgressLogger",
    "RegularizedAbel",
    "SolverConfig",
    "SourceSpec",
    "StopRun",
    "Termination",
    "Trajectory",
    "ValidationError",
    "observe",
    "run",
]
