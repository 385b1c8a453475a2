"""Memory kernels: closed forms, Mittag-Leffler evaluation and admissibility checks.

Every kernel is a frozen dataclass. Calling a kernel evaluates it without
domain checks (vectorised over numpy arrays); :func:`evaluate` is the checked
public entry point. ``antiderivative`` and ``second_antiderivative`` return
``K1(t) = int_0^t K`` and ``K2(t) = int_0^t K1``, which the product-integration
weights in :mod:`jmgt_sim.core.quadrature` are built from.
"""

import logging
import math
import threading
from dataclasses import dataclass, fields
from functools import lru_cache
from typing import Any, Callable, ClassVar, Dict, List, Mapping, NamedTuple, Tuple, Union

import mpmath
import numpy as np
from scipy import integrate, optimize, special

from .exceptions import (
    ConvergenceFailure,
    DiracNotPointwise,
    DomainError,
    FitFailure,
    MomentQuadratureFailure,
)
from .reports import CheckReport

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Mittag-Leffler regimes
SERIES_RADIUS = 10.0
SERIES_TERMS = 200
ASYMPTOTIC_TERMS = 80
ML_TOLERANCE = 1e-12
MP_MAX_TERMS = 20000

# finite-difference sign checks
FD_RELATIVE_STEP = 1e-4
FD_MIN_STEP = 1e-10
FD_MAX_STEP = 1e-2
SIGN_TOLERANCE = 1e-10

# sum-of-exponentials fitting
SOE_DENSITIES = (2, 3, 4, 6, 8)
SOE_FIT_NODES_PER_DECADE = 48
SOE_VALIDATION_POINTS = 10_000
SOE_MAX_TERMS = 64
SOE_REWEIGHT_PASSES = 3

QUAD_TOLERANCE = 1e-12


class KernelSpec:
    """Common interface of the memory-kernel variants."""

    kind: ClassVar[str] = ""
    #: exponent ``a`` such that ``K(t) ~ t**a`` at the origin (0 when bounded)
    singular_exponent: ClassVar[float] = 0.0

    def __call__(self, t: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def antiderivative(self, t: ArrayLike) -> ArrayLike:
        return _numeric_antiderivative(self, t, order=1)

    def second_antiderivative(self, t: ArrayLike) -> ArrayLike:
        return _numeric_antiderivative(self, t, order=2)

    @property
    def origin_exponent(self) -> float:
        return self.singular_exponent

    @property
    def label(self) -> str:
        params = ", ".join(f"{k}={v:g}" for k, v in self.params().items())
        return f"{self.kind}({params})" if params else self.kind

    def params(self) -> Dict[str, float]:
        return {}

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.kind, **self.params()}


def _check_open_unit(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise DomainError(f"{name} must satisfy 0 < {name} < 1, got {value}")


def _check_positive(name: str, value: float) -> None:
    if not value > 0.0 or not math.isfinite(value):
        raise DomainError(f"{name} must be positive and finite, got {value}")


@dataclass(frozen=True)
class Abel(KernelSpec):
    """Weakly singular kernel ``t**(alpha - 1) / Gamma(alpha)``."""

    alpha: float
    kind: ClassVar[str] = "abel"

    def __post_init__(self) -> None:
        _check_open_unit("alpha", self.alpha)

    @property
    def origin_exponent(self) -> float:
        return self.alpha - 1.0

    def __call__(self, t: ArrayLike) -> ArrayLike:
        return np.power(t, self.alpha - 1.0) * special.rgamma(self.alpha)

    def antiderivative(self, t: ArrayLike) -> ArrayLike:
        return np.power(t, self.alpha) * special.rgamma(self.alpha + 1.0)

    def second_antiderivative(self, t: ArrayLike) -> ArrayLike:
        return np.power(t, self.alpha + 1.0) * special.rgamma(self.alpha + 2.0)

    def params(self) -> Dict[str, float]:
        return {"alpha": self.alpha}


@dataclass(frozen=True)
class Exponential(KernelSpec):
    """Exponential kernel ``exp(-beta t)``."""

    beta: float
    kind: ClassVar[str] = "exponential"

    def __post_init__(self) -> None:
        _check_positive("beta", self.beta)

    def __call__(self, t: ArrayLike) -> ArrayLike:
        return np.exp(-self.beta * np.asarray(t, dtype=float))

    def antiderivative(self, t: ArrayLike) -> ArrayLike:
        return -np.expm1(-self.beta * np.asarray(t, dtype=float)) / self.beta

    def second_antiderivative(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        return t * t * phi_a(self.beta * t)

    def params(self) -> Dict[str, float]:
        return {"beta": self.beta}


@dataclass(frozen=True)
class RegularizedAbel(KernelSpec):
    """Exponentially regularized Abel kernel ``t**(alpha-1) exp(-beta t) / Gamma(alpha)``."""

    alpha: float
    beta: float
    kind: ClassVar[str] = "regularized_abel"

    def __post_init__(self) -> None:
        _check_open_unit("alpha", self.alpha)
        _check_positive("beta", self.beta)

    @property
    def origin_exponent(self) -> float:
        return self.alpha - 1.0

    def __call__(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        return np.power(t, self.alpha - 1.0) * np.exp(-self.beta * t) * special.rgamma(self.alpha)

    def antiderivative(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        return special.gammainc(self.alpha, self.beta * t) / self.beta**self.alpha

    def second_antiderivative(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        a, b = self.alpha, self.beta
        return t * special.gammainc(a, b * t) / b**a - a * special.gammainc(a + 1.0, b * t) / b ** (
            a + 1.0
        )

    def params(self) -> Dict[str, float]:
        return {"alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class MittagLeffler(KernelSpec):
    """Fractional Mittag-Leffler kernel ``t**(beta-1) E_{alpha,beta}(-t**alpha) / Gamma(1-alpha)``.

    Requires ``0 < alpha < 1`` and ``alpha <= beta <= 1``; the ``alpha = 1``
    end point is rejected because ``Gamma(1 - alpha)`` has a pole there.
    """

    alpha: float
    beta: float
    kind: ClassVar[str] = "mittag_leffler"

    def __post_init__(self) -> None:
        _check_open_unit("alpha", self.alpha)
        if not self.alpha <= self.beta <= 1.0:
            raise DomainError(f"beta must satisfy alpha <= beta <= 1, got beta={self.beta}")

    @property
    def origin_exponent(self) -> float:
        return self.beta - 1.0

    def _scaled(self, t: ArrayLike, shift: float) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        ml = mittag_leffler(self.alpha, self.beta + shift, -np.power(t, self.alpha))
        return np.power(t, self.beta - 1.0 + shift) * ml * special.rgamma(1.0 - self.alpha)

    def __call__(self, t: ArrayLike) -> ArrayLike:
        return self._scaled(t, 0.0)

    def antiderivative(self, t: ArrayLike) -> ArrayLike:
        return self._scaled(t, 1.0)

    def second_antiderivative(self, t: ArrayLike) -> ArrayLike:
        return self._scaled(t, 2.0)

    def params(self) -> Dict[str, float]:
        return {"alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class Polynomial(KernelSpec):
    """Polynomially decaying kernel ``(1 + t)**(-p)``."""

    p: float
    kind: ClassVar[str] = "polynomial"

    def __post_init__(self) -> None:
        if not self.p > 1.0 or not math.isfinite(self.p):
            raise DomainError(f"p must satisfy p > 1, got {self.p}")

    def __call__(self, t: ArrayLike) -> ArrayLike:
        return np.exp(-self.p * np.log1p(t))

    def antiderivative(self, t: ArrayLike) -> ArrayLike:
        return -np.expm1((1.0 - self.p) * np.log1p(t)) / (self.p - 1.0)

    def second_antiderivative(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        if self.p == 2.0:
            return t - np.log1p(t)
        q = 2.0 - self.p
        return (t - np.expm1(q * np.log1p(t)) / q) / (self.p - 1.0)

    def params(self) -> Dict[str, float]:
        return {"p": self.p}


@dataclass(frozen=True)
class Dirac(KernelSpec):
    """Dirac limit: the memory term collapses to local strong damping."""

    kind: ClassVar[str] = "dirac"

    def __call__(self, t: ArrayLike) -> ArrayLike:
        raise DiracNotPointwise("the Dirac kernel has no pointwise values")

    def antiderivative(self, t: ArrayLike) -> ArrayLike:
        raise DiracNotPointwise("the Dirac kernel has no pointwise values")

    def second_antiderivative(self, t: ArrayLike) -> ArrayLike:
        raise DiracNotPointwise("the Dirac kernel has no pointwise values")


@dataclass(frozen=True)
class CallableKernel(KernelSpec):
    """Kernel backed by an arbitrary vectorised callable.

    Meant for test fixtures (constant kernels, rescaled exponentials, a
    deliberately non-monotone ``sin``); nothing about admissibility is
    assumed. Moments come from adaptive quadrature.
    """

    func: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    kind: ClassVar[str] = "callable"

    def __call__(self, t: ArrayLike) -> ArrayLike:
        return self.func(np.asarray(t, dtype=float))

    @property
    def label(self) -> str:
        return self.name

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.kind, "name": self.name}


KERNEL_TYPES: Dict[str, type] = {
    cls.kind: cls
    for cls in (Abel, Exponential, RegularizedAbel, MittagLeffler, Polynomial, Dirac)
}


def kernel_from_dict(mapping: Mapping[str, Any]) -> KernelSpec:
    """Build a kernel from a config entry such as ``{"type": "abel", "alpha": 0.5}``.

    Raises:
        DomainError: Unknown type, unknown or missing parameters, or a
            parameter outside its admissible range.
    """
    entries = dict(mapping)
    kind = entries.pop("type", None)
    if kind not in KERNEL_TYPES:
        raise DomainError(f"unknown kernel type {kind!r}; expected one of {sorted(KERNEL_TYPES)}")
    cls = KERNEL_TYPES[kind]
    expected = {f.name for f in fields(cls)}
    unknown = set(entries) - expected
    if unknown:
        raise DomainError(f"unknown parameter(s) {sorted(unknown)} for kernel {kind!r}")
    missing = expected - set(entries)
    if missing:
        raise DomainError(f"missing parameter(s) {sorted(missing)} for kernel {kind!r}")
    try:
        values = {k: float(v) for k, v in entries.items()}
    except (TypeError, ValueError) as e:
        raise DomainError(f"kernel {kind!r} parameters must be numbers") from e
    return cls(**values)


def evaluate(kernel: KernelSpec, t: ArrayLike) -> ArrayLike:
    """Evaluate ``kernel`` at positive times.

    Raises:
        DiracNotPointwise: For the Dirac kernel.
        DomainError: If any ``t <= 0``.

    Example:
        >>> evaluate(Polynomial(p=2.0), 1.0)
        0.25
    """
    if isinstance(kernel, Dirac):
        raise DiracNotPointwise("the Dirac kernel has no pointwise values")
    arr = np.asarray(t, dtype=float)
    if np.any(~(arr > 0.0)):
        raise DomainError(f"kernels are evaluated at t > 0, got min t = {np.min(arr)}")
    value = kernel(arr)
    return float(value) if arr.ndim == 0 else np.asarray(value, dtype=float)


# ---------------------------------------------------------------------------
# Exponential integrals shared with quadrature
# ---------------------------------------------------------------------------


def phi_a(x: ArrayLike) -> ArrayLike:
    """``(x - 1 + exp(-x)) / x**2``, stable near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    direct = (xs + np.expm1(-xs)) / (xs * xs)
    series = 0.5 - x / 6.0 + x**2 / 24.0 - x**3 / 120.0 + x**4 / 720.0
    return np.where(small, series, direct)


def phi_b(x: ArrayLike) -> ArrayLike:
    """``(1 - exp(-x)(1 + x)) / x**2``, stable near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    direct = (-np.expm1(-xs) - xs * np.exp(-xs)) / (xs * xs)
    series = 0.5 - x / 3.0 + x**2 / 8.0 - x**3 / 30.0 + x**4 / 144.0
    return np.where(small, series, direct)


# ---------------------------------------------------------------------------
# Mittag-Leffler function
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _series_rgamma(alpha: float, beta: float) -> np.ndarray:
    k = np.arange(SERIES_TERMS, dtype=float)
    return special.rgamma(alpha * k + beta)


@lru_cache(maxsize=64)
def _asymptotic_rgamma(alpha: float, beta: float) -> np.ndarray:
    k = np.arange(1, ASYMPTOTIC_TERMS + 1, dtype=float)
    return special.rgamma(beta - alpha * k)


def _ml_power_series(alpha: float, beta: float, z: float, tol: float) -> Tuple[float, bool]:
    terms = np.power(z, np.arange(SERIES_TERMS, dtype=float)) * _series_rgamma(alpha, beta)
    if not np.all(np.isfinite(terms)):
        return math.nan, False
    value = float(math.fsum(terms))
    rounding = 4.0 * np.finfo(float).eps * float(np.sum(np.abs(terms)))
    tail = float(np.max(np.abs(terms[-5:])))
    error = rounding + tail
    return value, error <= tol * abs(value) or error < 1e-300


def _ml_asymptotic(alpha: float, beta: float, z: float, tol: float) -> Tuple[float, bool]:
    k = np.arange(1, ASYMPTOTIC_TERMS + 1, dtype=float)
    terms = -np.power(z, -k) * _asymptotic_rgamma(alpha, beta)
    mags = np.abs(terms)
    nonzero = np.flatnonzero(mags > 0.0)
    if nonzero.size == 0:
        return 0.0, True
    stop = int(nonzero[np.argmin(mags[nonzero])])
    value = float(math.fsum(terms[:stop]))
    error = float(mags[stop]) + 4.0 * np.finfo(float).eps * float(np.sum(mags[:stop]))
    return value, error <= tol * abs(value)


# mpmath precision is process-global
_MP_LOCK = threading.RLock()


@lru_cache(maxsize=32)
def _mp_rgamma_table(alpha: float, beta: float, terms: int, dps: int) -> List[Any]:
    # callers round terms up to a power of two and dps up to a multiple of 10
    with _MP_LOCK, mpmath.workdps(dps):
        a, b = mpmath.mpf(alpha), mpmath.mpf(beta)
        return [mpmath.rgamma(a * k + b) for k in range(terms)]


def _ml_extended(alpha: float, beta: float, z: float, tol: float) -> Tuple[float, bool]:
    x = abs(z)
    if x == 0.0:
        return float(special.rgamma(beta)), True
    # terms needed until |z|^k / Gamma(alpha k + beta) falls below tol * eps
    k = np.arange(MP_MAX_TERMS, dtype=float)
    log_terms = k * math.log(x) - special.gammaln(alpha * k + beta)
    peak = float(np.max(log_terms))
    below = np.flatnonzero((log_terms < math.log(tol) - 40.0) & (k > np.argmax(log_terms)))
    if below.size == 0:
        return math.nan, False
    terms = int(below[0]) + 1
    dps = 25 + max(0, int(math.ceil(peak / math.log(10.0))))
    dps = 10 * int(math.ceil(dps / 10))
    bucket = 1 << int(math.ceil(math.log2(terms)))
    table = _mp_rgamma_table(alpha, beta, bucket, dps)
    with _MP_LOCK, mpmath.workdps(dps):
        zz = mpmath.mpf(z)
        power = mpmath.mpf(1)
        total = mpmath.mpf(0)
        for coeff in table[:terms]:
            total += power * coeff
            power *= zz
        value = float(total)
    return value, math.isfinite(value)


def _ml_scalar(alpha: float, beta: float, z: float, tol: float = ML_TOLERANCE) -> float:
    if abs(z) <= SERIES_RADIUS:
        value, ok = _ml_power_series(alpha, beta, z, tol)
        if ok:
            return value
    elif z < 0.0 and alpha < 1.0:
        value, ok = _ml_asymptotic(alpha, beta, z, tol)
        if ok:
            return value
    value, ok = _ml_extended(alpha, beta, z, tol)
    if ok:
        return value
    raise ConvergenceFailure(
        f"Mittag-Leffler E_({alpha},{beta})({z}) did not reach relative accuracy {tol}"
    )


def mittag_leffler(alpha: float, beta: float, z: ArrayLike) -> ArrayLike:
    """Two-parameter Mittag-Leffler function ``E_{alpha,beta}(z)`` for real ``z``.

    Regimes, tried in order:

    1. power series with ``SERIES_TERMS`` terms for ``|z| <= SERIES_RADIUS``,
       accepted when its rounding and tail estimate is below
       ``ML_TOLERANCE`` relative;
    2. the optimally truncated asymptotic series
       ``-sum_k z**-k / Gamma(beta - alpha k)`` for ``z < -SERIES_RADIUS``
       and ``0 < alpha < 1``;
    3. the power series in extended precision (mpmath) with enough digits
       to absorb cancellation.

    Raises:
        DomainError: If ``alpha <= 0`` or ``beta <= 0``.
        ConvergenceFailure: If no regime certifies the tolerance.
    """
    if not (alpha > 0.0 and beta > 0.0):
        raise DomainError(f"Mittag-Leffler requires alpha > 0 and beta > 0, got {alpha}, {beta}")
    alpha, beta = float(alpha), float(beta)
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 0:
        return _ml_scalar(alpha, beta, float(arr))
    flat = np.array([_ml_scalar(alpha, beta, float(v)) for v in arr.ravel()])
    return flat.reshape(arr.shape)


# ---------------------------------------------------------------------------
# Admissibility checks
# ---------------------------------------------------------------------------


def monotonicity_check(
    kernel: KernelSpec, grid: ArrayLike, h: float = FD_RELATIVE_STEP
) -> CheckReport:
    """Check ``(-1)**n K^(n)(t) >= 0`` for ``n = 0, 1, 2`` on a grid.

    Derivatives are central differences with step ``h * t`` clamped to
    ``[FD_MIN_STEP, FD_MAX_STEP]`` (and to ``t / 2``). A sample passes when
    its signed value is at least ``-SIGN_TOLERANCE * max|K| / step**n`` over
    the three stencil points. The report also records whether ``K'`` vanishes
    identically on the grid, which the admissibility condition excludes.

    Raises:
        DomainError: On nonpositive grid points.
    """
    if isinstance(kernel, Dirac):
        raise DiracNotPointwise("the Dirac kernel has no pointwise values")
    t = np.asarray(grid, dtype=float).ravel()
    if t.size == 0 or np.any(~(t > 0.0)):
        raise DomainError("monotonicity grid must be nonempty and strictly positive")

    step = np.minimum(np.clip(h * t, FD_MIN_STEP, FD_MAX_STEP), 0.5 * t)
    left, mid, right = kernel(t - step), kernel(t), kernel(t + step)
    scale = np.maximum.reduce([np.abs(left), np.abs(mid), np.abs(right)])
    signed = {
        0: mid,
        1: -(right - left) / (2.0 * step),
        2: (right - 2.0 * mid + left) / step**2,
    }

    failures: List[Dict[str, Any]] = []
    minima: Dict[str, float] = {}
    for n, values in signed.items():
        tol = SIGN_TOLERANCE * scale / step**n
        bad = np.flatnonzero(values < -tol)
        # signed value in units of max|K| / h^n
        minima[f"min_normalized_d{n}"] = float(np.min(values * step**n / np.maximum(scale, 1e-300)))
        for i in bad:
            failures.append(
                {"t": float(t[i]), "order": n, "value": float(values[i]), "tolerance": float(-tol[i])}
            )

    nonconstant = bool(np.any(np.abs(signed[1]) > SIGN_TOLERANCE * scale / step))
    passed = not failures and nonconstant
    report = CheckReport(
        name=f"monotonicity[{kernel.label}]",
        passed=passed,
        tolerance=f"(-1)^n K^(n) >= -{SIGN_TOLERANCE:g} * max|K| / h^n, h = {h:g} t clamped",
        measured={"points": int(t.size), "nonconstant": nonconstant, **minima},
        failures=failures,
        detail="" if nonconstant else "K' vanishes on the whole grid",
    )
    if not passed:
        logger.warning(f"Monotonicity check failed for {kernel.label}: {len(failures)} samples")
    return report


class PositivityForms(NamedTuple):
    """Discrete quadratic forms of a kernel and of the reference ``exp(-t)``."""

    q_kernel: float
    q_exp: float

    def margin(self, eta: float) -> float:
        """``Q_K - eta * Q_exp``; nonnegative when the strong positivity bound holds."""
        return self.q_kernel - eta * self.q_exp


def strong_positivity_form(kernel: KernelSpec, y: ArrayLike, eta: float, dt: float) -> PositivityForms:
    """Return ``(Q_K, Q_exp)`` with ``Q = dt * sum_n (K * y)(t_n) y(t_n)``.

    Convolutions use the product-integration weights of
    :func:`jmgt_sim.core.quadrature.build_weights`. The caller compares
    ``Q_K`` against ``eta * Q_exp``.
    """
    from .quadrature import build_weights, quadratic_form

    if eta < 0.0:
        raise DomainError(f"eta must be nonnegative, got {eta}")
    samples = np.asarray(y, dtype=float)
    n = samples.size - 1
    if n < 1:
        return PositivityForms(0.0, 0.0)
    forms = PositivityForms(
        quadratic_form(build_weights(kernel, dt, n), samples),
        quadratic_form(build_weights(Exponential(1.0), dt, n), samples),
    )
    logger.debug(f"Strong positivity forms for {kernel.label}: {forms}, margin {forms.margin(eta):.3e}")
    return forms


# ---------------------------------------------------------------------------
# Laplace-domain view
# ---------------------------------------------------------------------------


def laplace_transform(kernel: KernelSpec, s: ArrayLike) -> ArrayLike:
    """Closed-form Laplace transform where one exists (complex ``s`` allowed).

    Raises:
        NotImplementedError: For kernels without an elementary transform
            (polynomial and callable kernels).
    """
    s = np.asarray(s, dtype=complex)
    if isinstance(kernel, Abel):
        return s ** (-kernel.alpha)
    if isinstance(kernel, Exponential):
        return 1.0 / (s + kernel.beta)
    if isinstance(kernel, RegularizedAbel):
        return (s + kernel.beta) ** (-kernel.alpha)
    if isinstance(kernel, MittagLeffler):
        a, b = kernel.alpha, kernel.beta
        return s ** (a - b) / (s**a + 1.0) * special.rgamma(1.0 - a)
    if isinstance(kernel, Dirac):
        return np.ones_like(s)
    raise NotImplementedError(f"no closed-form Laplace transform for {kernel.label}")


def strong_positivity_ratio(kernel: KernelSpec, omegas: ArrayLike) -> np.ndarray:
    """Frequency ratio ``Re K^(i w) / Re e^(i w)`` against ``exp(-t)``.

    ``Re e^(i w) = 1 / (1 + w**2)``; the infimum over ``w > 0`` is the best
    strong-positivity constant of the continuous kernel. Kernels without a
    closed transform use the Fourier cosine integral of ``K``.
    """
    w = np.asarray(omegas, dtype=float)
    try:
        real_part = np.real(laplace_transform(kernel, 1j * w))
    except NotImplementedError:
        real_part = np.array([_cosine_transform(kernel, float(om)) for om in w.ravel()]).reshape(
            w.shape
        )
    return real_part * (1.0 + w**2)


def _cosine_transform(kernel: KernelSpec, omega: float) -> float:
    head, _ = integrate.quad(kernel, 0.0, 1.0, limit=200)
    head_cos, _ = integrate.quad(kernel, 0.0, 1.0, weight="cos", wvar=omega, limit=200)
    tail, _ = integrate.quad(kernel, 1.0, np.inf, weight="cos", wvar=omega, limit=200)
    return head_cos + tail if omega > 0.0 else head + tail


# ---------------------------------------------------------------------------
# Moments by adaptive quadrature
# ---------------------------------------------------------------------------


def quad_moment(
    kernel: KernelSpec, a: float, b: float, weight: Callable[[float], float]
) -> float:
    """``int_a^b K(s) weight(s) ds`` to ``QUAD_TOLERANCE``.

    Integrals starting at the origin of a weakly singular kernel use the
    algebraic-weight rule so the singularity is integrated exactly.

    Raises:
        MomentQuadratureFailure: If the error estimate exceeds the tolerance.
    """
    exponent = kernel.origin_exponent
    if a == 0.0 and exponent < 0.0:
        # K(s) = s**exponent * regular(s); QAWS integrates the power exactly
        def integrand(s: float) -> float:
            if s <= 0.0:
                return _regular_at_zero(kernel) * weight(0.0)
            return float(kernel(s)) * s ** (-exponent) * weight(s)

        options: Dict[str, Any] = {"weight": "alg", "wvar": (exponent, 0.0)}
    else:

        def integrand(s: float) -> float:
            return float(kernel(s)) * weight(s)

        options = {}
    value, abserr = integrate.quad(
        integrand, a, b, epsabs=0.0, epsrel=QUAD_TOLERANCE, limit=200, **options
    )
    if not abserr <= max(QUAD_TOLERANCE * abs(value), 1e-15 * (b - a)):
        raise MomentQuadratureFailure(
            f"moment of {kernel.label} on [{a:g}, {b:g}] not certified", abserr=abserr
        )
    return value


def _regular_at_zero(kernel: KernelSpec) -> float:
    if isinstance(kernel, (Abel, RegularizedAbel)):
        return float(special.rgamma(kernel.alpha))
    if isinstance(kernel, MittagLeffler):
        return float(special.rgamma(kernel.beta) * special.rgamma(1.0 - kernel.alpha))
    return 0.0


def _numeric_antiderivative(kernel: KernelSpec, t: ArrayLike, order: int) -> ArrayLike:
    arr = np.asarray(t, dtype=float)
    out = np.empty(arr.shape)
    for idx, tv in np.ndenumerate(arr):
        if order == 1:
            out[idx] = quad_moment(kernel, 0.0, tv, lambda s: 1.0) if tv > 0.0 else 0.0
        else:
            out[idx] = quad_moment(kernel, 0.0, tv, lambda s, tv=tv: tv - s) if tv > 0.0 else 0.0
    return float(out) if arr.ndim == 0 else out


# ---------------------------------------------------------------------------
# Sum-of-exponentials compression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SoeApprox:
    """``K(t) ~ sum_j w_j exp(-lambda_j t)`` on ``[cutoff, horizon]``.

    ``achieved_error`` is the maximum relative error measured on a
    geometric validation grid of ``validation_points`` nodes.
    """

    weights: Tuple[float, ...]
    rates: Tuple[float, ...]
    cutoff: float
    horizon: float
    tol: float
    achieved_error: float
    validation_points: int
    kernel_label: str = ""

    @property
    def terms(self) -> int:
        return len(self.weights)

    def __call__(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        w = np.asarray(self.weights)
        lam = np.asarray(self.rates)
        return np.exp(-np.multiply.outer(t, lam)) @ w


def soe_fit(
    kernel: KernelSpec,
    horizon: float,
    cutoff: float,
    tol: float = 1e-6,
    max_terms: int = SOE_MAX_TERMS,
) -> SoeApprox:
    """Fit nonnegative exponential weights to ``kernel`` on ``[cutoff, horizon]``.

    Rates are geometric on ``[1e-3 / horizon, 100 / cutoff]``; weights come
    from nonnegative least squares on the relative residual at
    ``SOE_FIT_NODES_PER_DECADE`` geometric nodes per decade, refined by a
    few reweighting passes towards the max-norm error. The rate density is
    increased through ``SOE_DENSITIES`` until the validation error meets
    ``tol``. Rates with zero weight are dropped.

    Raises:
        DiracNotPointwise: For the Dirac kernel.
        DomainError: Unless ``0 < cutoff < horizon`` and ``tol > 0``.
        FitFailure: If no density reaches ``tol`` within ``max_terms`` terms.
    """
    if isinstance(kernel, Dirac):
        raise DiracNotPointwise("the Dirac kernel cannot be fitted by exponentials")
    if not (0.0 < cutoff < horizon) or not tol > 0.0:
        raise DomainError(f"soe_fit needs 0 < cutoff < horizon and tol > 0, got {cutoff}, {horizon}, {tol}")

    if isinstance(kernel, Exponential):
        return SoeApprox((1.0,), (kernel.beta,), cutoff, horizon, tol, 0.0, 0, kernel.label)

    decades = math.log10(horizon / cutoff)
    t_fit = np.geomspace(cutoff, horizon, max(64, int(SOE_FIT_NODES_PER_DECADE * decades) + 1))
    t_val = np.geomspace(cutoff, horizon, SOE_VALIDATION_POINTS)
    k_fit = np.asarray(kernel(t_fit), dtype=float)
    k_val = np.asarray(kernel(t_val), dtype=float)

    lam_lo, lam_hi = 1e-3 / horizon, 100.0 / cutoff
    best: Tuple[float, int] = (math.inf, 0)
    for density in SOE_DENSITIES:
        count = int(math.ceil(density * math.log10(lam_hi / lam_lo))) + 1
        rates = np.geomspace(lam_lo, lam_hi, count)
        design = np.exp(-np.multiply.outer(t_fit, rates)) / k_fit[:, None]
        basis_val = np.exp(-np.multiply.outer(t_val, rates))
        row_weight = np.ones_like(t_fit)
        error, weights = math.inf, np.zeros(count)
        for _ in range(SOE_REWEIGHT_PASSES + 1):
            trial, _ = optimize.nnls(design * row_weight[:, None], row_weight, maxiter=50 * count)
            trial_error = float(np.max(np.abs(basis_val @ trial - k_val) / np.abs(k_val)))
            if trial_error < error:
                error, weights = trial_error, trial
            residual = np.abs(design @ trial - 1.0)
            row_weight = row_weight * np.sqrt(1.0 + residual / max(float(np.mean(residual)), 1e-300))
            row_weight /= np.max(row_weight)

        keep = weights > 0.0
        terms = int(np.count_nonzero(keep))
        logger.debug(f"SoE fit {kernel.label}: density {density}/decade, {terms} terms, error {error:.2e}")
        if error < best[0]:
            best = (error, terms)
        if error <= tol and terms <= max_terms:
            logger.info(f"SoE fit for {kernel.label}: {terms} terms, max relative error {error:.2e}")
            return SoeApprox(
                tuple(float(w) for w in weights[keep]),
                tuple(float(r) for r in rates[keep]),
                cutoff,
                horizon,
                tol,
                error,
                SOE_VALIDATION_POINTS,
                kernel.label,
            )

    raise FitFailure(
        f"SoE fit for {kernel.label} reached {best[0]:.2e} > {tol:g} with {best[1]} terms",
        achieved_error=best[0],
        terms=best[1],
    )
