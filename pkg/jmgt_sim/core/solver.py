"""Galerkin time stepping for the fractionally damped JMGT equation.

Each sine mode ``k`` with eigenvalue ``lam`` obeys the first-order system

    psi' = v,   v' = w,
    tau w' = -w - c^2 lam psi - tau c^2 lam v + delta C + N + f,

where ``C = K * g`` is the memory term with history channel
``g = Laplacian(tau w + v) = -lam (tau w + v)`` and ``N`` is the projected
nonlinearity ``2 sigma grad(psi) . grad(v)``. The Dirac kernel replaces ``C``
by ``g``.

Steps are Crank-Nicolson for the linear terms and for the newest history
weight, with Picard iteration on ``N``. Each mode's 3x3 implicit system is
eliminated in closed form.
"""

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .exceptions import (
    ConfigError,
    NonFiniteError,
    PicardDivergence,
    SolverError,
    StopRun,
    UnsupportedKernel,
)
from .kernels import Abel, Dirac, Exponential, KernelSpec, SoeApprox, mittag_leffler, soe_fit
from .observer_base import ObserverBase
from .observer_registry import ObserverRegistry
from .quadrature import (
    ConvolutionWeights,
    SoeState,
    build_weights,
    convolve_series,
    convolve_tail,
    soe_history,
    soe_step,
)
from .spectral import BoxDomain, ModalField, elliptic_solve, gradient_dot, laplacian, linf_norm

logger = logging.getLogger(__name__)

HISTORY_BACKENDS = ("exact", "soe")


@dataclass(frozen=True)
class SolverConfig:
    """Physical and numerical parameters of one simulation.

    ``delta = 0`` is allowed (inviscid runs). The Dirac kernel requires the
    ``exact`` history backend, where it collapses to local damping.
    """

    tau: float
    c: float
    delta: float
    sigma: float
    kernel: KernelSpec
    dt: float
    T: float
    domain: BoxDomain
    history: str = "exact"
    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    soe_tol: float = 1e-6
    blowup_factor: float = 1e3

    def __post_init__(self) -> None:
        if not self.tau > 0.0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not self.c > 0.0:
            raise ConfigError(f"c must be positive, got {self.c}")
        if not self.delta >= 0.0:
            raise ConfigError(f"delta must be nonnegative, got {self.delta}")
        if not math.isfinite(self.sigma):
            raise ConfigError(f"sigma must be finite, got {self.sigma}")
        if not self.dt > 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.T >= 0.0:
            raise ConfigError(f"T must be nonnegative, got {self.T}")
        if self.history not in HISTORY_BACKENDS:
            raise ConfigError(f"history must be one of {HISTORY_BACKENDS}, got {self.history!r}")
        if isinstance(self.kernel, Dirac) and self.history != "exact":
            raise ConfigError("the Dirac kernel requires the 'exact' history backend")
        if not self.picard_tol > 0.0 or self.picard_max_iter < 1:
            raise ConfigError("picard_tol must be positive and picard_max_iter >= 1")

    @property
    def c2(self) -> float:
        return self.c * self.c

    @property
    def n_steps(self) -> int:
        """``floor(T / dt)``, tolerant to rounding in ``T / dt``."""
        return int(math.floor(self.T / self.dt + 1e-9))

    @property
    def dealias(self) -> bool:
        return self.domain.dealias


# ---------------------------------------------------------------------------
# Sources
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SourceTerm:
    """One separable source term ``f~(t) = amplitude(t) * pattern``.

    ``derivative`` is ``amplitude'`` and gives ``f = d f~ / dt``.
    """

    pattern: ModalField
    amplitude: Callable[[float], float]
    derivative: Callable[[float], float]


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Finite modal expansion of the integrated source ``f~`` and ``f = f~'``."""

    terms: Tuple[SourceTerm, ...] = ()
    label: str = "none"

    @classmethod
    def none(cls) -> "SourceSpec":
        return cls()

    @classmethod
    def decaying_mode(
        cls, domain: BoxDomain, k: Sequence[int], amplitude: float, rate: float
    ) -> "SourceSpec":
        """``f~ = amplitude * exp(-rate t) * v_k``."""
        if not rate > 0.0:
            raise ConfigError(f"decaying source needs rate > 0, got {rate}")
        pattern = ModalField.single_mode(domain, k, 1.0)
        term = SourceTerm(
            pattern,
            lambda t: amplitude * math.exp(-rate * t),
            lambda t: -rate * amplitude * math.exp(-rate * t),
        )
        return cls((term,), f"decaying_mode(k={tuple(k)}, amplitude={amplitude:g}, rate={rate:g})")

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def _combine(self, domain: BoxDomain, t: float, attr: str) -> np.ndarray:
        out = np.zeros(domain.shape)
        for term in self.terms:
            out += getattr(term, attr)(t) * term.pattern.coeffs
        return out

    def f_tilde(self, domain: BoxDomain, t: float) -> np.ndarray:
        return self._combine(domain, t, "amplitude")

    def forcing(self, domain: BoxDomain, t: float) -> np.ndarray:
        return self._combine(domain, t, "derivative")

    def w11_norm(self, domain: BoxDomain, horizon: float = math.inf) -> float:
        """``int_0^horizon (||Laplacian f~|| + ||Laplacian f||) dt``."""
        if self.is_zero:
            return 0.0
        weights = domain.eigenvalues**2 * domain.volume_factor

        def integrand(t: float) -> float:
            a = self.f_tilde(domain, t)
            b = self.forcing(domain, t)
            return math.sqrt(np.sum(weights * a * a)) + math.sqrt(np.sum(weights * b * b))

        value, _ = integrate.quad(integrand, 0.0, horizon, limit=200)
        return value


MANUFACTURED_KERNELS = (Dirac, Exponential, Abel)


class ManufacturedCase(NamedTuple):
    """Exact decaying solution with the source that produces it."""

    source: SourceSpec
    psi0: ModalField
    psi2: ModalField
    exact: Callable[[float], ModalField]


def _memory_of_decay(kernel: KernelSpec, t: float) -> Tuple[float, float, float, float]:
    """``(K*E)(t), (K*T1)(t)`` and their time integrals, ``E = e^-t``, ``T1 = t e^-t``."""
    e, t1 = math.exp(-t), t * math.exp(-t)
    if isinstance(kernel, Dirac):
        return e, t1, 1.0 - e, 1.0 - e - t1
    if isinstance(kernel, Exponential):
        beta = kernel.beta
        eb = math.exp(-beta * t)
        if beta == 1.0:
            return (
                t * e,
                0.5 * t * t * e,
                1.0 - e - t1,
                1.0 - e * (1.0 + t + 0.5 * t * t),
            )
        g = beta - 1.0
        k_e = (e - eb) / g
        k_t1 = (e * (g * t - 1.0) + eb) / g**2
        int_e = ((1.0 - e) - (1.0 - eb) / beta) / g
        int_t1 = (g * (1.0 - e - t1) - (1.0 - e) + (1.0 - eb) / beta) / g**2
        return k_e, k_t1, int_e, int_t1
    if isinstance(kernel, Abel):
        a = kernel.alpha
        if t == 0.0:
            return 0.0, 0.0, 0.0, 0.0

        def ml(b: float) -> float:
            return float(mittag_leffler(1.0, b, -t))

        return (
            t**a * ml(1.0 + a),
            t ** (a + 1.0) * (ml(a + 1.0) - a * ml(a + 2.0)),
            t ** (a + 1.0) * ml(a + 2.0),
            t ** (a + 2.0) * (ml(a + 2.0) - (a + 1.0) * ml(a + 3.0)),
        )
    raise UnsupportedKernel(f"no manufactured solution for {kernel.label}")


def manufactured_source(config: SolverConfig, mode: Sequence[int]) -> ManufacturedCase:
    """Source for the exact solution ``psi = e^-t (1 + a t) v_k``, ``a = 1 - 1/tau``.

    The choice of ``a`` makes ``psi_t(0) = -psi(0)/tau``, so the solution is
    compatible with :func:`initialize`. Then ``z = tau psi_t + psi = -kappa t e^-t``
    and ``u = tau psi_tt + psi_t = kappa (t - 1) e^-t`` with
    ``kappa = (tau - 1)**2 / tau``, and the modal equation
    ``u' + c^2 lam z + delta lam (K * u) = f`` gives ``f`` in closed form for
    the Dirac, exponential and Abel kernels.
    """
    domain = config.domain
    pattern = ModalField.single_mode(domain, mode, 1.0)
    lam = float(domain.eigenvalues[tuple(int(v) - 1 for v in mode)])
    tau, c2, delta, kernel = config.tau, config.c2, config.delta, config.kernel
    a = 1.0 - 1.0 / tau
    kappa = (tau - 1.0) ** 2 / tau
    if not isinstance(kernel, MANUFACTURED_KERNELS):
        raise UnsupportedKernel(f"no manufactured solution for {kernel.label}")

    def forcing(t: float) -> float:
        e, t1 = math.exp(-t), t * math.exp(-t)
        k_e, k_t1, _, _ = _memory_of_decay(kernel, t)
        return kappa * (2.0 * e - t1 - c2 * lam * t1 + delta * lam * (k_t1 - k_e))

    def integrated(t: float) -> float:
        e, t1 = math.exp(-t), t * math.exp(-t)
        _, _, int_e, int_t1 = _memory_of_decay(kernel, t)
        return kappa * (
            1.0 - e + t1 - c2 * lam * (1.0 - e - t1) + delta * lam * (int_t1 - int_e)
        )

    def exact(t: float) -> ModalField:
        return pattern * (math.exp(-t) * (1.0 + a * t))

    source = SourceSpec(
        (SourceTerm(pattern, integrated, forcing),), f"manufactured(k={tuple(mode)})"
    )
    return ManufacturedCase(source, pattern, pattern * (1.0 - 2.0 * a), exact)


# ---------------------------------------------------------------------------
# History operators
# ---------------------------------------------------------------------------


class HistoryOperator:
    """Memory term ``C_{n+1} = tail + newest_weight * g_{n+1}``.

    Operators are single-owner: :meth:`commit` is called exactly once per
    accepted step.
    """

    newest_weight: float = 0.0

    def tail(self, n: int, g_prev: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def commit(self, n: int, g_prev: np.ndarray, g_new: np.ndarray) -> None:
        raise NotImplementedError

    @property
    def length(self) -> int:
        return 0


class LocalHistory(HistoryOperator):
    """No memory: the Dirac kernel, or runs without damping."""

    newest_weight = 1.0

    def tail(self, n: int, g_prev: np.ndarray) -> np.ndarray:
        return np.zeros_like(g_prev)

    def commit(self, n: int, g_prev: np.ndarray, g_new: np.ndarray) -> None:
        pass


class ExactHistory(HistoryOperator):
    """Full buffer of ``g`` samples convolved with product-integration weights."""

    def __init__(self, weights: ConvolutionWeights, g0: np.ndarray):
        self.weights = weights
        self.newest_weight = float(weights.a[0])
        self.buffer = np.zeros((weights.n_steps + 1,) + g0.shape)
        self.buffer[0] = g0
        self._length = 1

    def tail(self, n: int, g_prev: np.ndarray) -> np.ndarray:
        return np.asarray(convolve_tail(self.weights, self.buffer[: n + 1]))

    def commit(self, n: int, g_prev: np.ndarray, g_new: np.ndarray) -> None:
        self.buffer[n + 1] = g_new
        self._length = n + 2

    @property
    def length(self) -> int:
        return self._length

    @property
    def samples(self) -> np.ndarray:
        return self.buffer[: self._length]


class SoeHistory(HistoryOperator):
    """Sum-of-exponentials accumulators per mode."""

    def __init__(self, approx: SoeApprox, kernel: KernelSpec, dt: float, shape: Tuple[int, ...]):
        self.approx = approx
        self.state = SoeState.create(approx, kernel, dt, shape)
        self.dt = dt
        self.newest_weight = self.state.local.new

    def tail(self, n: int, g_prev: np.ndarray) -> np.ndarray:
        return self.state.local.prev * g_prev + np.asarray(soe_history(self.state, self.approx))

    def commit(self, n: int, g_prev: np.ndarray, g_new: np.ndarray) -> None:
        self.state, _ = soe_step(self.state, self.approx, g_prev, g_new, self.dt)

    @property
    def length(self) -> int:
        return self.state.steps + 1


def make_history(config: SolverConfig, g0: np.ndarray) -> HistoryOperator:
    if isinstance(config.kernel, Dirac) or config.delta == 0.0:
        return LocalHistory()
    if config.history == "soe":
        horizon = max(config.T, 2.0 * config.dt)
        approx = soe_fit(config.kernel, horizon, config.dt, config.soe_tol)
        return SoeHistory(approx, config.kernel, config.dt, g0.shape)
    return ExactHistory(build_weights(config.kernel, config.dt, max(config.n_steps, 1)), g0)


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Accumulators:
    """Trapezoidal time integrals carried along the run.

    ``dissipation`` is ``int ||grad Laplacian z||^2`` with ``z = tau v + psi``;
    ``memory_u``/``memory_z`` are ``delta int <K * grad Lap u, grad Lap u>``
    (``u = tau w + v``) and the same for ``z``; ``remainder_1``/``remainder_2``
    are the source and nonlinearity pairings of the two energy identities.
    """

    dissipation: float = 0.0
    h3_psi_sq: float = 0.0
    h3_psi_t_sq: float = 0.0
    memory_u: float = 0.0
    memory_z: float = 0.0
    remainder_1: float = 0.0
    remainder_2: float = 0.0


class Integrands(NamedTuple):
    dissipation: float
    h3_psi_sq: float
    h3_psi_t_sq: float
    memory_u: float
    memory_z: float
    remainder_1: float
    remainder_2: float


@dataclass(frozen=True, eq=False)
class SolverState:
    """Modal state ``(psi, v = psi_t, w = psi_tt)`` at step ``n``.

    ``conv`` holds the memory term ``C_n``, ``conv_integral`` its running
    time integral (equal to ``K * Laplacian(z)`` because ``z(0) = 0``),
    ``nonlinear`` and ``forcing`` the right-hand side terms at ``t_n``. The
    history operator is shared between successive states and advanced in
    place.
    """

    n: int
    t: float
    psi: ModalField
    v: ModalField
    w: ModalField
    xi: ModalField
    psi0: ModalField
    conv: np.ndarray
    conv_integral: np.ndarray
    nonlinear: np.ndarray
    forcing: np.ndarray
    history: HistoryOperator
    source: SourceSpec
    acc: Accumulators = field(default_factory=Accumulators)
    integrands: Optional[Integrands] = None
    picard_iterations: int = 0

    @property
    def domain(self) -> BoxDomain:
        return self.psi.domain

    @property
    def history_length(self) -> int:
        return self.history.length


def shifted_fields(state: SolverState, tau: float) -> Tuple[ModalField, ModalField]:
    """``(u, z) = (tau w + v, tau v + psi)``."""
    return tau * state.w + state.v, tau * state.v + state.psi


def _integrands(
    config: SolverConfig,
    psi: np.ndarray,
    v: np.ndarray,
    w: np.ndarray,
    conv: np.ndarray,
    conv_integral: np.ndarray,
    nonlinear: np.ndarray,
    forcing: np.ndarray,
    f_tilde: np.ndarray,
) -> Integrands:
    domain = config.domain
    lam = domain.eigenvalues
    vol = domain.volume_factor
    tau, delta = config.tau, config.delta
    u = tau * w + v
    z = tau * v + psi
    lam2 = lam * lam
    lam3 = lam2 * lam
    if config.sigma != 0.0:
        psi_field = ModalField(psi, domain)
        square = gradient_dot(psi_field, psi_field, 0.5 * config.sigma).coeffs
    else:
        square = 0.0
    return Integrands(
        dissipation=float(np.sum(lam3 * z * z) * vol),
        h3_psi_sq=float(np.sum(lam3 * psi * psi) * vol),
        h3_psi_t_sq=float(np.sum(lam3 * v * v) * vol),
        memory_u=float(delta * np.sum(-lam2 * conv * u) * vol),
        memory_z=float(delta * np.sum(-lam2 * conv_integral * z) * vol),
        remainder_1=float(np.sum(lam2 * (nonlinear + forcing) * u) * vol),
        remainder_2=float(np.sum(lam2 * (square + f_tilde) * z) * vol),
    )


def initialize(
    config: SolverConfig,
    psi0: ModalField,
    psi2: ModalField,
    source: Optional[SourceSpec] = None,
) -> SolverState:
    """Initial state: ``v0 = -psi0 / tau``, ``w0 = psi2``, zero history.

    ``xi0`` solves ``-c^2 Laplacian(xi0) = sigma |grad psi0|^2 - tau psi2 - psi1
    + tau c^2 Laplacian(psi0) + f~(0)``.

    Raises:
        ConfigError: If the data live on a different domain than the config.
    """
    domain = config.domain
    for name, fld in (("psi0", psi0), ("psi2", psi2)):
        if fld.domain != domain:
            raise ConfigError(f"{name} lives on {fld.domain}, config domain is {domain}")
    source = source or SourceSpec.none()
    for term in source.terms:
        if term.pattern.domain != domain:
            raise ConfigError("source pattern lives on a different domain")

    tau, c2, sigma = config.tau, config.c2, config.sigma
    v0 = psi0 * (-1.0 / tau)
    w0 = psi2
    lam = domain.eigenvalues
    f0 = source.forcing(domain, 0.0)
    f_tilde0 = source.f_tilde(domain, 0.0)

    square = gradient_dot(psi0, psi0, 0.5 * sigma, config.dealias)
    rhs = square - tau * psi2 - v0 + (tau * c2) * laplacian(psi0) + ModalField(f_tilde0, domain)
    xi0 = elliptic_solve(rhs, c2)

    g0 = -lam * (tau * w0.coeffs + v0.coeffs)
    nonlinear0 = gradient_dot(psi0, v0, sigma, config.dealias).coeffs
    zero = np.zeros(domain.shape)
    history = make_history(config, g0)
    # the Dirac memory term is local: C = g from the first step on
    conv0 = g0 if isinstance(config.kernel, Dirac) and config.delta != 0.0 else zero

    integrands = _integrands(
        config, psi0.coeffs, v0.coeffs, w0.coeffs, conv0, zero, nonlinear0, f0, f_tilde0
    )
    logger.debug(f"Initialized state on {domain.modes} modes, history '{config.history}'")
    return SolverState(
        n=0,
        t=0.0,
        psi=psi0,
        v=v0,
        w=w0,
        xi=xi0,
        psi0=psi0,
        conv=conv0,
        conv_integral=zero,
        nonlinear=nonlinear0,
        forcing=f0,
        history=history,
        source=source,
        integrands=integrands,
    )


def _picard_converged(update: float, size: float, tol: float) -> bool:
    return update <= tol * max(1.0, size)


def step(state: SolverState, config: SolverConfig) -> SolverState:
    """Advance one Crank-Nicolson step with Picard iteration on the nonlinearity.

    Raises:
        SolverError: If the state is already at the final time.
        PicardDivergence: If the Picard update grows on two consecutive
            iterations or the iteration cap is hit.
        NonFiniteError: If any coefficient becomes NaN or infinite.
    """
    n = state.n
    if n >= config.n_steps:
        raise SolverError(f"state already at final step {n}", t=state.t)
    domain = config.domain
    lam = domain.eigenvalues
    tau, c2, delta, sigma = config.tau, config.c2, config.delta, config.sigma
    dt = config.dt
    h = 0.5 * dt
    t_new = (n + 1) * dt

    psi, v, w = state.psi.coeffs, state.v.coeffs, state.w.coeffs
    g_prev = -lam * (tau * w + v)
    f_new = state.source.forcing(domain, t_new)
    f_old = state.forcing
    rhs_old = (
        -w - c2 * lam * psi - tau * c2 * lam * v + delta * state.conv + state.nonlinear + f_old
    )

    history = state.history
    if delta != 0.0:
        tail = history.tail(n, g_prev)
        a0 = history.newest_weight
    else:
        tail, a0 = 0.0, 0.0

    a_w = tau + h + h * delta * a0 * lam * tau
    a_v = h * tau * c2 * lam + h * delta * a0 * lam
    a_psi = h * c2 * lam
    r1 = psi + h * v
    r2 = v + h * w
    base = tau * w + h * rhs_old + h * (delta * tail + f_new)
    denom = a_w + h * a_v + h * h * a_psi
    shift = a_v * r2 + a_psi * (r1 + h * r2)

    def solve(nonlinear: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        w_new = (base + h * nonlinear - shift) / denom
        v_new = r2 + h * w_new
        psi_new = r1 + h * v_new
        return psi_new, v_new, w_new

    def check_finite(*arrays: np.ndarray) -> None:
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise NonFiniteError(f"non-finite modal coefficients at t={t_new:g}", t=t_new)

    if sigma == 0.0:
        psi_new, v_new, w_new = solve(np.zeros(domain.shape))
        nonlinear_new = np.zeros(domain.shape)
        iterations = 1
        check_finite(psi_new, v_new, w_new)
    else:
        guess = state.nonlinear
        previous = np.concatenate([psi.ravel(), v.ravel(), w.ravel()])
        updates: List[float] = []
        iterations = 0
        while True:
            iterations += 1
            psi_new, v_new, w_new = solve(guess)
            check_finite(psi_new, v_new, w_new)
            current = np.concatenate([psi_new.ravel(), v_new.ravel(), w_new.ravel()])
            update = float(np.linalg.norm(current - previous))
            updates.append(update)
            guess = gradient_dot(
                ModalField(psi_new, domain), ModalField(v_new, domain), sigma, config.dealias
            ).coeffs
            check_finite(guess)
            if iterations > 1 and _picard_converged(
                update, float(np.linalg.norm(current)), config.picard_tol
            ):
                break
            if len(updates) >= 4 and updates[-1] > updates[-2] > updates[-3]:
                raise PicardDivergence(
                    f"Picard update grew twice in a row at t={t_new:g}",
                    t=t_new,
                    residual=update,
                    iterations=iterations,
                )
            if iterations >= config.picard_max_iter:
                raise PicardDivergence(
                    f"Picard iteration hit {iterations} iterations at t={t_new:g}",
                    t=t_new,
                    residual=update,
                    iterations=iterations,
                )
            previous = current
        nonlinear_new = guess
        psi_new, v_new, w_new = solve(nonlinear_new)
        check_finite(psi_new, v_new, w_new)

    g_new = -lam * (tau * w_new + v_new)
    conv_new = tail + a0 * g_new if delta != 0.0 else np.zeros(domain.shape)
    if delta != 0.0:
        history.commit(n, g_prev, g_new)
    conv_integral = state.conv_integral + h * (state.conv + conv_new)

    xi_new = state.xi + ModalField(h * (psi + psi_new), domain)
    f_tilde_new = state.source.f_tilde(domain, t_new)
    integrands = _integrands(
        config, psi_new, v_new, w_new, conv_new, conv_integral, nonlinear_new, f_new, f_tilde_new
    )
    old = state.integrands
    acc = Accumulators(*(a + h * (o + i) for a, o, i in zip(_fields(state.acc), old, integrands)))

    return replace(
        state,
        n=n + 1,
        t=t_new,
        psi=ModalField(psi_new, domain),
        v=ModalField(v_new, domain),
        w=ModalField(w_new, domain),
        xi=xi_new,
        conv=conv_new,
        conv_integral=conv_integral,
        nonlinear=nonlinear_new,
        forcing=f_new,
        acc=acc,
        integrands=integrands,
        picard_iterations=iterations,
    )


def _fields(acc: Accumulators) -> Tuple[float, ...]:
    return (
        acc.dissipation,
        acc.h3_psi_sq,
        acc.h3_psi_t_sq,
        acc.memory_u,
        acc.memory_z,
        acc.remainder_1,
        acc.remainder_2,
    )


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


class Termination(enum.Enum):
    COMPLETED = "completed"
    NON_FINITE = "non_finite"
    PICARD_DIVERGENCE = "picard_divergence"
    STOPPED = "stopped"


@dataclass
class Trajectory:
    """Result of :func:`run`.

    Attributes:
        final_state: Last accepted state.
        reports: Energy reports at every recorded step (step 0 included).
        termination: Why the run ended.
        termination_time: Time of the failure, or of the last step.
        picard_iterations: Picard iterations of every accepted step.
        blowup_time: First recorded time at which ``||psi_t||_inf`` exceeded
            ``blowup_factor`` times its initial value, if it did.
        eta_hat: Strong-positivity estimate behind the dissipation scale.
        stride: Recording stride in steps.
        message: Failure message, empty on completion.
    """

    final_state: SolverState
    reports: List[Any]
    termination: Termination
    termination_time: float
    picard_iterations: List[int] = field(default_factory=list)
    blowup_time: Optional[float] = None
    eta_hat: float = 1.0
    stride: int = 1
    message: str = ""

    @property
    def completed(self) -> bool:
        return self.termination is Termination.COMPLETED

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.reports])

    def series(self, name: str) -> np.ndarray:
        """One report attribute as an array over recorded steps."""
        return np.array([getattr(r, name) for r in self.reports], dtype=float)

    def summary(self) -> Dict[str, Any]:
        last = self.reports[-1] if self.reports else None
        return {
            "termination": self.termination.value,
            "termination_time": self.termination_time,
            "records": len(self.reports),
            "max_picard_iterations": max(self.picard_iterations, default=0),
            "blowup_time": self.blowup_time,
            "eta_hat": self.eta_hat,
            "final_Y": None if last is None else last.Y,
        }


def run(
    config: SolverConfig,
    psi0: ModalField,
    psi2: ModalField,
    source: Optional[SourceSpec] = None,
    observers: Sequence[ObserverBase] = (),
    stride: int = 1,
    eta_hat: Optional[float] = None,
    registry: Optional[ObserverRegistry] = None,
) -> Trajectory:
    """Iterate :func:`step` to ``T`` (or the first failure), recording every ``stride`` steps.

    Events fired on the observer registry:
        - ``run.started`` with ``{"config", "state", "report"}``
        - ``step.recorded`` with ``{"n", "state", "report", "config"}`` at
          ``n = 0, stride, 2 stride, ...``
        - ``run.failed`` with ``{"termination", "error", "t"}``
        - ``run.finished`` with ``{"trajectory"}``

    ``NonFiniteError`` and ``PicardDivergence`` end the run with the
    matching termination cause; an observer raising :class:`StopRun` ends it
    with ``STOPPED``. Other errors propagate.

    The dissipation functional uses ``eta = 2 / eta_hat``; ``eta_hat``
    defaults to :func:`jmgt_sim.core.diagnostics.default_eta_hat`.
    """
    from .diagnostics import default_eta_hat

    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    registry = registry or ObserverRegistry()
    eta_hat = default_eta_hat(config.kernel) if eta_hat is None else eta_hat
    for observer in observers:
        observer.attach(registry)
    try:
        return _iterate(config, psi0, psi2, source, registry, stride, eta_hat)
    finally:
        for observer in observers:
            observer.detach()


def _iterate(
    config: SolverConfig,
    psi0: ModalField,
    psi2: ModalField,
    source: Optional[SourceSpec],
    registry: ObserverRegistry,
    stride: int,
    eta_hat: float,
) -> Trajectory:
    from .diagnostics import energy_report

    eta = 2.0 / eta_hat
    state = initialize(config, psi0, psi2, source)
    report = energy_report(state, config, eta, None, initial=True)
    reports = [report]
    picard: List[int] = []
    termination, message = Termination.COMPLETED, ""
    blowup_time: Optional[float] = None
    end_time = 0.0
    scale0 = linf_norm(state.v)

    logger.info(
        f"Run started: kernel={config.kernel.label}, dt={config.dt:g}, T={config.T:g}, "
        f"modes={config.domain.modes}, history={config.history}"
    )
    try:
        registry.trigger("run.started", {"config": config, "state": state, "report": report})
        registry.trigger("step.recorded", {"n": 0, "state": state, "report": report, "config": config})
        for n in range(1, config.n_steps + 1):
            try:
                state = step(state, config)
            except (NonFiniteError, PicardDivergence) as e:
                termination = (
                    Termination.NON_FINITE
                    if isinstance(e, NonFiniteError)
                    else Termination.PICARD_DIVERGENCE
                )
                message = str(e)
                end_time = e.t if e.t is not None else state.t + config.dt
                logger.warning(f"Run terminated ({termination.value}) at t={e.t}: {e}")
                registry.trigger("run.failed", {"termination": termination, "error": e, "t": e.t})
                break
            picard.append(state.picard_iterations)
            if n % stride:
                continue
            report = energy_report(state, config, eta, reports[-1])
            reports.append(report)
            if (
                blowup_time is None
                and scale0 > 0.0
                and report.linf_psi_t > config.blowup_factor * scale0
            ):
                blowup_time = report.t
                logger.warning(f"Blow-up indicator crossed at t={report.t:g}")
            registry.trigger(
                "step.recorded", {"n": n, "state": state, "report": report, "config": config}
            )
    except StopRun as e:
        termination, message = Termination.STOPPED, str(e)
    if termination in (Termination.COMPLETED, Termination.STOPPED):
        end_time = state.t

    trajectory = Trajectory(
        final_state=state,
        reports=reports,
        termination=termination,
        termination_time=end_time,
        picard_iterations=picard,
        blowup_time=blowup_time,
        eta_hat=eta_hat,
        stride=stride,
        message=message,
    )
    try:
        registry.trigger("run.finished", {"trajectory": trajectory})
    except StopRun:
        pass
    logger.info(f"Run finished: {termination.value} at t={trajectory.termination_time:g}")
    return trajectory


# ---------------------------------------------------------------------------
# Reference solutions
# ---------------------------------------------------------------------------


class ModeTrajectory(NamedTuple):
    """Dense reference solution of one mode."""

    t: np.ndarray
    psi: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def z(self, tau: float) -> np.ndarray:
        return tau * self.v + self.psi


def mode_ode_reference(
    config: SolverConfig,
    k: Sequence[int],
    T: float,
    tol: float = 1e-12,
    psi0: float = 1.0,
    psi2: float = 0.0,
    forcing: Optional[Callable[[float], float]] = None,
    samples: Optional[np.ndarray] = None,
) -> ModeTrajectory:
    """High-accuracy solution of the linear modal system with ``solve_ivp``.

    The exponential kernel is realised by an auxiliary variable
    ``q = K * (tau w + v)`` with ``q' = -beta q + tau w + v``; the Dirac
    kernel needs none. Initial data follow :func:`initialize`:
    ``v(0) = -psi0 / tau``.

    Raises:
        ConfigError: If ``sigma != 0``.
        UnsupportedKernel: For kernels without a local realisation.
    """
    if config.sigma != 0.0:
        raise ConfigError("mode_ode_reference needs sigma = 0")
    kernel = config.kernel
    if not isinstance(kernel, (Dirac, Exponential)):
        raise UnsupportedKernel(f"no local ODE realisation for {kernel.label}")
    lam = float(config.domain.eigenvalues[tuple(int(v) - 1 for v in k)])
    tau, c2, delta = config.tau, config.c2, config.delta
    f = forcing or (lambda t: 0.0)

    if isinstance(kernel, Dirac):

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            psi, v, w = y
            memory = tau * w + v
            dw = (-w - c2 * lam * psi - tau * c2 * lam * v - delta * lam * memory + f(t)) / tau
            return np.array([v, w, dw])

        y0 = [psi0, -psi0 / tau, psi2]
    else:
        beta = kernel.beta

        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            psi, v, w, q = y
            dw = (-w - c2 * lam * psi - tau * c2 * lam * v - delta * lam * q + f(t)) / tau
            return np.array([v, w, dw, -beta * q + tau * w + v])

        y0 = [psi0, -psi0 / tau, psi2, 0.0]

    t_eval = samples if samples is not None else np.linspace(0.0, T, 1001)
    sol = integrate.solve_ivp(
        rhs, (0.0, T), y0, method="DOP853", t_eval=t_eval, rtol=tol, atol=tol * 1e-2
    )
    if not sol.success:
        raise SolverError(f"reference integration failed: {sol.message}")
    return ModeTrajectory(sol.t, sol.y[0], sol.y[1], sol.y[2])


def psi_from_z(z: np.ndarray, psi0: Any, tau: float, t: np.ndarray) -> np.ndarray:
    """``psi = (1/tau) (e^{-s/tau} * z)(t) + e^{-t/tau} psi0`` on a uniform grid.

    ``z`` has shape ``(len(t), ...)``; trailing axes are independent channels
    (modes) and ``psi0`` broadcasts against them.
    """
    times = np.asarray(t, dtype=float)
    samples = np.asarray(z, dtype=float)
    if samples.shape[0] != times.size:
        raise ConfigError("z and t must have the same number of samples")
    decay = np.exp(-times / tau)
    if times.size == 1:
        return np.broadcast_to(np.asarray(psi0, dtype=float), samples.shape).copy()
    dt = float(times[1] - times[0])
    weights = build_weights(Exponential(1.0 / tau), dt, times.size - 1)
    flat = samples.reshape(times.size, -1)
    conv = np.column_stack([convolve_series(weights, flat[:, j]) for j in range(flat.shape[1])])
    conv = conv.reshape(samples.shape)
    shape = (times.size,) + (1,) * (samples.ndim - 1)
    return conv / tau + decay.reshape(shape) * np.asarray(psi0, dtype=float)
