"""Exception hierarchy for jmgt-sim.

All exceptions derive from :class:`JmgtError`, so callers can catch the base
class to handle any simulator failure with a single ``except``.
"""

from typing import Optional


class JmgtError(Exception):
    """Base class for every exception raised by jmgt-sim.

    Catch this to handle any kernel, quadrature, solver or configuration
    failure without enumerating subclasses.
    """

    pass


class KernelError(JmgtError):
    """Base class for failures while evaluating or fitting a memory kernel."""

    pass


class DomainError(KernelError, ValueError):
    """Raised when an argument lies outside the domain of an operation.

    Typical causes: evaluating a kernel at ``t <= 0``, a nonpositive time grid
    handed to :func:`monotonicity_check`, or kernel parameters outside their
    admissible range at construction (``alpha = 1.5`` for an Abel kernel).
    """

    pass


class DiracNotPointwise(KernelError):
    """Raised when a pointwise operation is requested for the Dirac kernel.

    The Dirac limit only has meaning inside the solver, where it collapses the
    memory term to ``delta * Laplacian(tau * psi_tt + psi_t)``.
    """

    pass


class ConvergenceFailure(KernelError):
    """Raised when no Mittag-Leffler regime reaches the requested accuracy."""

    pass


class FitFailure(KernelError):
    """Raised when a sum-of-exponentials fit misses its tolerance.

    Attributes:
        achieved_error: Best maximum relative error reached on the
            validation grid.
        terms: Number of exponentials in that best attempt.
    """

    def __init__(self, message: str, achieved_error: float = float("nan"), terms: int = 0):
        super().__init__(message)
        self.achieved_error = achieved_error
        self.terms = terms


class QuadratureError(JmgtError):
    """Base class for convolution-weight failures."""

    pass


class MomentQuadratureFailure(QuadratureError):
    """Raised when adaptive quadrature cannot certify a kernel moment.

    Attributes:
        abserr: Absolute error estimate returned by the integrator.
    """

    def __init__(self, message: str, abserr: float = float("nan")):
        super().__init__(message)
        self.abserr = abserr


class SpectralError(JmgtError):
    """Base class for failures in the sine-eigenbasis layer."""

    pass


class DomainMismatch(SpectralError):
    """Raised when two modal fields living on different boxes are combined."""

    pass


class SolverError(JmgtError):
    """Base class for time-stepping failures.

    Attributes:
        t: Simulation time at which the failure was detected, if known.
    """

    def __init__(self, message: str, t: Optional[float] = None):
        super().__init__(message)
        self.t = t


class PicardDivergence(SolverError):
    """Raised when the Picard iteration of a step does not converge.

    Signals stiffness or the onset of blow-up. Raised when the modal update
    grows on two consecutive iterations or the iteration cap is hit.

    Attributes:
        residual: Last update norm.
        iterations: Iterations performed.
    """

    def __init__(
        self,
        message: str,
        t: Optional[float] = None,
        residual: float = float("nan"),
        iterations: int = 0,
    ):
        super().__init__(message, t)
        self.residual = residual
        self.iterations = iterations


class NonFiniteError(SolverError):
    """Raised when a modal coefficient becomes NaN or infinite.

    For inviscid (``delta = 0``) runs this is the blow-up indicator.
    """

    pass


class ConfigError(SolverError):
    """Raised when solver inputs are inconsistent (shapes, domains, kernels)."""

    pass


class UnsupportedKernel(SolverError):
    """Raised when an operation needs a local ODE realization of the kernel.

    The ODE reference integrator only supports the Dirac and exponential
    kernels.
    """

    pass


class DiagnosticsError(JmgtError):
    """Base class for failures while assembling energy diagnostics."""

    pass


class DegenerateDenominator(DiagnosticsError):
    """Raised when a bootstrap ratio has an identically zero denominator.

    Happens when the initial energy, the datum norm, the source norm and the
    dissipation are all exactly zero.
    """

    pass


class ConfigurationError(JmgtError):
    """Base class for run-configuration failures."""

    pass


class ParseError(ConfigurationError):
    """Raised when a configuration file is not valid TOML.

    Attributes:
        line: 1-based line of the syntax error, when the parser reports it.
        column: 1-based column of the syntax error, when reported.
    """

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(ConfigurationError):
    """Raised when a parsed configuration fails validation.

    Unknown keys, missing required keys and out-of-range values all raise
    this error.

    Attributes:
        key: Dotted name of the offending key (``"kernel.alpha"``).
    """

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class ObserverError(JmgtError):
    """Raised when an observer fails under the ``fail_fast`` error strategy.

    Wraps the underlying exception (available via ``__cause__``). Under
    ``log_and_continue`` or ``collect_all`` the original error is logged or
    collected instead.
    """

    pass


class StopRun(JmgtError):
    """Raised by an observer to end a run after the current record.

    Remaining observers for the event are skipped and the run loop returns a
    trajectory whose termination cause is ``STOPPED``.

    Example:
        >>> class Budget(ObserverBase):
        ...     name = "budget"
        ...
        ...     @observe("step.recorded")
        ...     def cap(self, payload):
        ...         if payload["report"].Y > 1.0:
        ...             raise StopRun("energy budget exceeded")
    """

    pass


class ScenarioRegistrationError(JmgtError):
    """Raised when a class cannot be registered as a scenario.

    Most commonly because it does not inherit from ``ScenarioBase`` or its
    ``name`` is empty.
    """

    pass


class ScenarioNotFoundError(JmgtError):
    """Raised when a scenario name is not registered with the manager."""

    pass
