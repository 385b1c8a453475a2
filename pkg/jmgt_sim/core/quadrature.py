"""Discrete Laplace convolution ``(K * g)(t_n)`` on a uniform grid.

Product integration: ``g`` is replaced by its piecewise-linear interpolant and
the kernel is integrated exactly against each hat function, so

    (K * g)(t_n) = b[n] g_0 + sum_{k=1}^{n} a[n - k] g_k,

with ``a[0] = K2(dt)/dt``, ``a[j] = (K2((j+1)dt) - 2 K2(j dt) + K2((j-1)dt))/dt``
and ``b[n] = K1(n dt) - (K2(n dt) - K2((n-1)dt))/dt``. The weights sum to
``K1(t_n)`` for every ``n`` (constants are convolved exactly).

The fast path replaces the history part (everything older than one step) by
a sum of exponentials advanced by a one-step recursion per term.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg, special

from .exceptions import DiracNotPointwise, DomainError, MomentQuadratureFailure
from .kernels import (
    Abel,
    Dirac,
    Exponential,
    KernelSpec,
    Polynomial,
    SoeApprox,
    phi_a,
    phi_b,
    quad_moment,
)
from .reports import CheckReport

logger = logging.getLogger(__name__)

# intervals closer than this to the origin use adaptive quadrature
ADAPTIVE_INTERVALS = 16
GAUSS_POINTS = 16
FIRST_MOMENT_RTOL = 1e-10
POSITIVITY_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class ConvolutionWeights:
    """Product-integration weights for one kernel, step and horizon.

    Attributes:
        dt: Time step.
        n_steps: Largest step index ``N`` the weights cover.
        a: Interior weights ``a[0..N]`` (indexed by the gap ``n - k``).
        b: Weights of the initial sample, ``b[n]`` for ``n = 0..N``
            (``b[0] = 0``).
        kernel_label: Label of the kernel the weights were built for.
    """

    dt: float
    n_steps: int
    a: np.ndarray
    b: np.ndarray
    kernel_label: str = ""

    def first_moment(self, n: int) -> float:
        """Sum of the weights at step ``n``: the discrete ``int_0^{t_n} K``."""
        if n == 0:
            return 0.0
        return float(np.sum(self.a[:n]) + self.b[n])


def _second_difference_power(x: np.ndarray, h: float, q: float) -> np.ndarray:
    """``(x+h)**q - 2 x**q + (x-h)**q`` without cancellation, for ``x >= h > 0``."""
    r = h / x
    with np.errstate(divide="ignore"):
        return np.power(x, q) * (np.expm1(q * np.log1p(r)) + np.expm1(q * np.log1p(-r)))


def _abel_weights(kernel: Abel, dt: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    alpha = kernel.alpha
    q = alpha + 1.0
    j = np.arange(n + 1, dtype=float)
    a = np.empty(n + 1)
    a[0] = 1.0
    a[1:] = _second_difference_power(j[1:], 1.0, q)
    a *= dt**alpha * special.rgamma(alpha + 2.0)

    b = np.zeros(n + 1)
    m = j[1:]
    # n^q - (n-1)^q
    with np.errstate(divide="ignore"):
        step_power = -np.power(m, q) * np.expm1(q * np.log1p(-1.0 / m))
    b[1:] = dt**alpha * (
        np.power(m, alpha) * special.rgamma(alpha + 1.0) - step_power * special.rgamma(alpha + 2.0)
    )
    return a, b


def _exponential_weights(kernel: Exponential, dt: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    x = kernel.beta * dt
    j = np.arange(n + 1, dtype=float)
    a = np.empty(n + 1)
    a[0] = dt * phi_a(x)
    sinc_sq = (np.sinh(0.5 * x) / (0.5 * x)) ** 2 if x > 0.0 else 1.0
    a[1:] = dt * np.exp(-j[1:] * x) * sinc_sq
    b = np.zeros(n + 1)
    b[1:] = dt * np.exp(-(j[1:] - 1.0) * x) * phi_b(x)
    return a, b


def _polynomial_weights(kernel: Polynomial, dt: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    p = kernel.p
    j = np.arange(n + 1, dtype=float)
    x = 1.0 + j[1:] * dt
    a = np.empty(n + 1)
    a[0] = kernel.second_antiderivative(dt) / dt
    if p == 2.0:
        r = dt / x
        a[1:] = -(np.log1p(r) + np.log1p(-r)) / dt
    else:
        q = 2.0 - p
        a[1:] = -_second_difference_power(x, dt, q) / (q * (p - 1.0) * dt)
    t = j * dt
    k2 = kernel.second_antiderivative(t)
    b = np.zeros(n + 1)
    b[1:] = kernel.antiderivative(t[1:]) - np.diff(k2) / dt
    return a, b


def _hat_integrals(kernel: KernelSpec, dt: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-interval integrals of ``K`` against the rising and falling hat halves.

    ``rise[i] = int K(s) (s - x_i)/dt`` and ``fall[i] = int K(s) (x_i + dt - s)/dt``
    over ``[x_i, x_i + dt]`` with ``x_i = i dt``.
    """
    rise = np.empty(n)
    fall = np.empty(n)
    near = min(n, ADAPTIVE_INTERVALS)
    for i in range(near):
        x0 = i * dt
        rise[i] = quad_moment(kernel, x0, x0 + dt, lambda s, x0=x0: (s - x0) / dt)
        fall[i] = quad_moment(kernel, x0, x0 + dt, lambda s, x0=x0: (x0 + dt - s) / dt)
    if n > near:
        nodes, gauss_w = leggauss(GAUSS_POINTS)
        frac = 0.5 * (nodes + 1.0)
        starts = np.arange(near, n, dtype=float)[:, None] * dt
        values = np.asarray(kernel(starts + frac[None, :] * dt), dtype=float)
        scaled = 0.5 * dt * gauss_w[None, :] * values
        rise[near:] = scaled @ frac
        fall[near:] = scaled @ (1.0 - frac)
    return rise, fall


def _quadrature_weights(kernel: KernelSpec, dt: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    # one extra interval so a[n] is defined like the closed forms
    rise, fall = _hat_integrals(kernel, dt, n + 1)
    a = np.empty(n + 1)
    a[0] = fall[0]
    a[1:] = rise[:n] + fall[1:]
    b = np.zeros(n + 1)
    b[1:] = rise[:n]
    return a, b


def build_weights(kernel: KernelSpec, dt: float, n_steps: int) -> ConvolutionWeights:
    """Build product-integration weights for ``n_steps`` steps of size ``dt``.

    Abel, exponential and polynomial kernels use closed-form moments; every
    other kernel integrates its moments adaptively to ``1e-12`` near the
    origin and with Gauss-Legendre panels away from it. The result is
    certified against ``K1(t_N)`` (first-moment exactness).

    Raises:
        DiracNotPointwise: For the Dirac kernel.
        DomainError: Unless ``dt > 0`` and ``n_steps >= 1``.
        MomentQuadratureFailure: If a moment or the certificate misses
            the tolerance.
    """
    if isinstance(kernel, Dirac):
        raise DiracNotPointwise("the Dirac kernel has no convolution weights")
    if not dt > 0.0 or n_steps < 1:
        raise DomainError(f"build_weights needs dt > 0 and N >= 1, got dt={dt}, N={n_steps}")

    if isinstance(kernel, Abel):
        a, b = _abel_weights(kernel, dt, n_steps)
    elif isinstance(kernel, Exponential):
        a, b = _exponential_weights(kernel, dt, n_steps)
    elif isinstance(kernel, Polynomial):
        a, b = _polynomial_weights(kernel, dt, n_steps)
    else:
        a, b = _quadrature_weights(kernel, dt, n_steps)
        exact = float(kernel.antiderivative(n_steps * dt))
        discrete = float(np.sum(a[:n_steps]) + b[n_steps])
        if abs(discrete - exact) > FIRST_MOMENT_RTOL * max(abs(exact), 1e-300):
            raise MomentQuadratureFailure(
                f"weights for {kernel.label} miss the first moment: {discrete!r} vs {exact!r}",
                abserr=abs(discrete - exact),
            )

    logger.info(f"Built convolution weights for {kernel.label}: dt={dt:g}, N={n_steps}")
    return ConvolutionWeights(dt, n_steps, a, b, kernel.label)


def convolve_tail(weights: ConvolutionWeights, history: np.ndarray) -> Union[float, np.ndarray]:
    """``(K * g)(t_n)`` minus the newest term, given samples ``g_0..g_{n-1}``.

    ``history`` may carry trailing channel axes (one per spectral mode).

    Raises:
        IndexError: If ``n`` exceeds the weight horizon.
    """
    g = np.asarray(history, dtype=float)
    n = g.shape[0]
    if n > weights.n_steps:
        raise IndexError(f"history of length {n} exceeds weight horizon N={weights.n_steps}")
    if n == 0:
        return 0.0
    value = weights.b[n] * g[0]
    if n > 1:
        # a[n-k] for k = 1..n-1
        value = value + np.tensordot(weights.a[n - 1 : 0 : -1], g[1:n], axes=(0, 0))
    return value


def convolve_at(weights: ConvolutionWeights, history: np.ndarray) -> Union[float, np.ndarray]:
    """Discrete ``(K * g)(t_n)`` from samples ``g_0..g_n``; zero at ``n = 0``.

    Raises:
        IndexError: If ``n`` exceeds the weight horizon.
    """
    g = np.asarray(history, dtype=float)
    n = g.shape[0] - 1
    if n > weights.n_steps:
        raise IndexError(f"history of length {n + 1} exceeds weight horizon N={weights.n_steps}")
    if n <= 0:
        return 0.0 if g.ndim <= 1 else np.zeros(g.shape[1:])
    return convolve_tail(weights, g[:n]) + weights.a[0] * g[n]


def convolve_series(weights: ConvolutionWeights, samples: np.ndarray) -> np.ndarray:
    """``(K * g)(t_n)`` for every ``n = 0..len(samples)-1`` of a scalar signal."""
    g = np.asarray(samples, dtype=float)
    n = g.size - 1
    if n > weights.n_steps:
        raise IndexError(f"signal of length {n + 1} exceeds weight horizon N={weights.n_steps}")
    out = np.zeros(n + 1)
    if n == 0:
        return out
    out[1:] = np.convolve(weights.a[:n], g[1:])[:n] + weights.b[1 : n + 1] * g[0]
    return out


class LocalWeights(NamedTuple):
    """Weights of the newest subinterval ``[t_{n-1}, t_n]``."""

    new: float
    prev: float


def local_weights(kernel: KernelSpec, dt: float) -> LocalWeights:
    """Weights of ``g_n`` and ``g_{n-1}`` in ``int_0^dt K(s) g(t_n - s) ds``."""
    weights = build_weights(kernel, dt, 1)
    return LocalWeights(float(weights.a[0]), float(weights.b[1]))


# ---------------------------------------------------------------------------
# Sum-of-exponentials history
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SoeState:
    """Auxiliary accumulators ``q_j(t) = int_0^t exp(-lambda_j (t - s)) g(s) ds``.

    ``q`` has shape ``(terms, *channel_shape)``. The state is single-owner
    and advanced exactly once per step by :func:`soe_step`.
    """

    q: np.ndarray
    decay: np.ndarray
    coef_prev: np.ndarray
    coef_new: np.ndarray
    local: LocalWeights
    dt: float
    steps: int = 0
    last_sample: Optional[np.ndarray] = field(default=None)

    @classmethod
    def create(
        cls,
        approx: SoeApprox,
        kernel: KernelSpec,
        dt: float,
        channel_shape: Sequence[int] = (),
    ) -> "SoeState":
        rates = np.asarray(approx.rates, dtype=float)
        x = rates * dt
        shape = (len(rates),) + tuple(channel_shape)
        return cls(
            q=np.zeros(shape),
            decay=np.exp(-x),
            coef_prev=dt * phi_b(x),
            coef_new=dt * phi_a(x),
            local=local_weights(kernel, dt),
            dt=dt,
        )


def _expand(values: np.ndarray, ndim: int) -> np.ndarray:
    return values.reshape(values.shape + (1,) * (ndim - 1))


def soe_history(state: SoeState, approx: SoeApprox) -> Union[float, np.ndarray]:
    """Contribution of everything older than one step, ``sum_j w_j exp(-lambda_j dt) q_j``."""
    w = np.asarray(approx.weights) * state.decay
    return np.tensordot(w, state.q, axes=(0, 0))


def soe_step(
    state: SoeState,
    approx: SoeApprox,
    g_prev: Union[float, np.ndarray],
    g_new: Union[float, np.ndarray],
    dt: float,
) -> Tuple[SoeState, Union[float, np.ndarray]]:
    """Advance the accumulators over ``[t_{n-1}, t_n]`` and return ``(K * g)(t_n)``.

    The newest subinterval is integrated with the exact local weights; the
    older part comes from the exponential sum. The recursion is exact for
    each exponential and piecewise-linear ``g``.

    Raises:
        DomainError: If ``dt`` differs from the step the state was built for.
        FloatingPointError: If the accumulators overflow.
    """
    if not math.isclose(dt, state.dt, rel_tol=1e-12):
        raise DomainError(f"SoE state was built for dt={state.dt!r}, stepped with dt={dt!r}")
    g_prev = np.asarray(g_prev, dtype=float)
    g_new = np.asarray(g_new, dtype=float)
    history = soe_history(state, approx)
    value = state.local.new * g_new + state.local.prev * g_prev + history

    nd = state.q.ndim
    q = (
        _expand(state.decay, nd) * state.q
        + _expand(state.coef_prev, nd) * g_prev
        + _expand(state.coef_new, nd) * g_new
    )
    if not np.all(np.isfinite(q)):
        raise FloatingPointError(f"SoE accumulators overflowed at step {state.steps + 1}")
    new_state = replace(state, q=q, steps=state.steps + 1, last_sample=g_new)
    return new_state, (float(value) if np.ndim(value) == 0 else value)


# ---------------------------------------------------------------------------
# Quadratic forms and positivity
# ---------------------------------------------------------------------------


def quadratic_form(weights: ConvolutionWeights, y: np.ndarray) -> float:
    """``dt * sum_{n>=1} (K * y)(t_n) y_n`` for a sampled signal ``y_0..y_N``."""
    samples = np.asarray(y, dtype=float)
    conv = convolve_series(weights, samples)
    return float(weights.dt * np.dot(conv[1:], samples[1:]))


def quadratic_form_matrix(weights: ConvolutionWeights, n: Optional[int] = None) -> np.ndarray:
    """Symmetric matrix of the form on rest-start signals (``y_0 = 0``).

    For ``y = (0, y_1..y_n)``, ``quadratic_form(weights, y) == y[1:] @ S @ y[1:]``.
    """
    n = weights.n_steps if n is None else n
    lower = linalg.toeplitz(weights.a[:n], np.zeros(n))
    return 0.5 * weights.dt * (lower + lower.T)


def _rest_start_signals(rng: np.random.Generator, trials: int, n: int) -> np.ndarray:
    signals = np.zeros((trials, n + 1))
    signals[:, 1:] = rng.choice((-1.0, 1.0), size=(trials, n))
    return signals


def discrete_positivity_check(
    weights: ConvolutionWeights,
    trials: int = 1000,
    seed: int = 0,
    signals: Optional[np.ndarray] = None,
) -> CheckReport:
    """Minimum of the discrete quadratic form over random rest-start signals.

    Signals are ``y_0 = 0`` followed by independent +-1 samples, unless
    ``signals`` (shape ``(trials, N + 1)``) is given. The check passes when
    every form is at least ``-1e-10`` times its absolute-value scale.
    """
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    n = weights.n_steps
    rng = np.random.default_rng(seed)
    ys = _rest_start_signals(rng, trials, n) if signals is None else np.atleast_2d(signals)
    ys = np.asarray(ys, dtype=float)

    lower = linalg.toeplitz(weights.a[:n], np.zeros(n))
    inner = ys[:, 1:]
    conv = inner @ lower.T + np.outer(ys[:, 0], weights.b[1 : n + 1])
    forms = weights.dt * np.sum(conv * inner, axis=1)
    scales = weights.dt * np.sum((np.abs(inner) @ np.abs(lower).T) * np.abs(inner), axis=1)
    scales += weights.dt * np.abs(ys[:, 0]) * (np.abs(inner) @ np.abs(weights.b[1 : n + 1]))

    normalized = forms / np.maximum(scales, 1e-300)
    worst = int(np.argmin(normalized))
    passed = bool(np.all(forms >= -POSITIVITY_TOLERANCE * scales))
    report = CheckReport(
        name=f"discrete_positivity[{weights.kernel_label}]",
        passed=passed,
        tolerance=f"Q >= -{POSITIVITY_TOLERANCE:g} * scale",
        measured={
            "trials": int(ys.shape[0]),
            "steps": n,
            "min_form": float(np.min(forms)),
            "min_normalized": float(normalized[worst]),
            "scale_at_min": float(scales[worst]),
        },
    )
    if not passed:
        logger.warning(f"Discrete positivity failed for {weights.kernel_label}: min {np.min(forms):.3e}")
    return report


def l2_control_check(
    weights: ConvolutionWeights,
    eta: float,
    trials: int = 200,
    seed: int = 0,
    modes: int = 8,
    rtol: float = 1e-8,
) -> CheckReport:
    """Discrete check of ``dt sum |y|^2 <= (2/eta) [Q_K(y) + Q_K(y_t)]``.

    Signals are smooth random sums ``y = sum_m c_m (1 - cos(w_m t))`` so that
    both ``y`` and ``y_t`` start at rest.
    """
    if not eta > 0.0:
        raise DomainError(f"eta must be positive, got {eta}")
    n = weights.n_steps
    t = np.arange(n + 1) * weights.dt
    horizon = max(t[-1], weights.dt)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        coeffs = rng.standard_normal(modes)
        freqs = np.pi * np.arange(1, modes + 1) / horizon * rng.uniform(0.5, 2.0, modes)
        y = (1.0 - np.cos(np.outer(t, freqs))) @ coeffs
        y_t = np.sin(np.outer(t, freqs)) @ (coeffs * freqs)
        lhs = weights.dt * float(np.dot(y[1:], y[1:]))
        rhs = 2.0 / eta * (quadratic_form(weights, y) + quadratic_form(weights, y_t))
        if rhs > 0.0:
            worst = max(worst, lhs / rhs)
        elif lhs > 0.0:
            worst = math.inf
    passed = worst <= 1.0 + rtol
    return CheckReport(
        name=f"l2_control[{weights.kernel_label}]",
        passed=passed,
        tolerance=f"ratio <= 1 + {rtol:g}",
        measured={"trials": trials, "eta": eta, "max_ratio": worst},
    )


def convergence_orders(errors: Sequence[float], ratio: float = 2.0) -> np.ndarray:
    """Observed orders ``log(e_i / e_{i+1}) / log(ratio)`` of a refinement study."""
    e = np.asarray(errors, dtype=float)
    if e.size < 2:
        return np.array([])
    return np.log(e[:-1] / e[1:]) / math.log(ratio)


def weights_summary(weights: ConvolutionWeights) -> Dict[str, Any]:
    """Small dict describing a weight set, for verdict files."""
    return {
        "kernel": weights.kernel_label,
        "dt": weights.dt,
        "steps": weights.n_steps,
        "a0": float(weights.a[0]),
        "first_moment": weights.first_moment(weights.n_steps),
    }
