"""Dirichlet-Laplacian sine eigenbasis on boxes ``prod_i [0, L_i]``, ``d = 1, 2, 3``.

A :class:`ModalField` stores coefficients ``c_k`` of
``psi = sum_k c_k prod_i sin(k_i pi x_i / L_i)`` for ``1 <= k_i <= M_i``.
Every field vanishes on the boundary together with its Laplacian, so Sobolev
seminorms are weighted coefficient sums.

Grid values live on interior collocation nodes ``x_j = j L / (P + 1)``,
``j = 1..P``, and are reached with type-I sine transforms. Products of
gradients are formed on the closed grid ``j = 0..P+1``, where each factor is a
sine or cosine series, and projected back onto sines in closed form.
"""

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft

from .exceptions import DomainMismatch, SpectralError

logger = logging.getLogger(__name__)

Number = Union[int, float]


@dataclass(frozen=True)
class BoxDomain:
    """Box ``prod_i [0, L_i]`` truncated to ``M_i`` sine modes per axis.

    Attributes:
        lengths: Edge lengths ``L_i > 0``.
        modes: Modes per axis ``M_i >= 1``.
        dealias: Use padded grids (``P + 1 = 2M`` intervals) for products.
    """

    lengths: Tuple[float, ...]
    modes: Tuple[int, ...]
    dealias: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "modes", tuple(int(v) for v in self.modes))
        if len(self.lengths) not in (1, 2, 3):
            raise SpectralError(f"dimension must be 1, 2 or 3, got {len(self.lengths)}")
        if len(self.modes) != len(self.lengths):
            raise SpectralError("lengths and modes must have one entry per axis")
        if any(not length > 0.0 for length in self.lengths):
            raise SpectralError(f"edge lengths must be positive, got {self.lengths}")
        if any(m < 1 for m in self.modes):
            raise SpectralError(f"modes per axis must be >= 1, got {self.modes}")

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.modes

    @property
    def volume_factor(self) -> float:
        """``prod_i L_i / 2``, the squared L2 norm of one unit-amplitude mode."""
        return float(np.prod([length / 2.0 for length in self.lengths]))

    def wavenumbers(self, axis: int) -> np.ndarray:
        """``k pi / L`` for ``k = 1..M`` on one axis."""
        return np.arange(1, self.modes[axis] + 1) * np.pi / self.lengths[axis]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """``lambda_k = sum_i (k_i pi / L_i)**2``, shape ``modes``."""
        grids = np.meshgrid(*[self.wavenumbers(i) ** 2 for i in range(self.dim)], indexing="ij")
        return np.sum(grids, axis=0)

    def grid_points(self, dealias: Optional[bool] = None) -> Tuple[int, ...]:
        """Interior collocation points per axis."""
        padded = self.dealias if dealias is None else dealias
        return tuple(2 * m - 1 if padded else m for m in self.modes)

    def nodes(self, dealias: Optional[bool] = None) -> Tuple[np.ndarray, ...]:
        """Interior node coordinates per axis."""
        return tuple(
            np.arange(1, p + 1) * length / (p + 1)
            for p, length in zip(self.grid_points(dealias), self.lengths)
        )


@dataclass(frozen=True, eq=False)
class ModalField:
    """Sine-basis coefficients of a scalar field on a :class:`BoxDomain`."""

    coeffs: np.ndarray
    domain: BoxDomain

    def __post_init__(self) -> None:
        arr = np.asarray(self.coeffs, dtype=float)
        if arr.shape != self.domain.shape:
            raise SpectralError(f"coefficient shape {arr.shape} != modes {self.domain.shape}")
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def zeros(cls, domain: BoxDomain) -> "ModalField":
        return cls(np.zeros(domain.shape), domain)

    @classmethod
    def single_mode(cls, domain: BoxDomain, k: Sequence[int], amplitude: float = 1.0) -> "ModalField":
        """Field ``amplitude * prod_i sin(k_i pi x_i / L_i)`` (1-based ``k``)."""
        index = tuple(int(v) - 1 for v in k)
        if len(index) != domain.dim or any(not 0 <= i < m for i, m in zip(index, domain.modes)):
            raise SpectralError(f"mode {tuple(k)} outside 1..{domain.modes}")
        coeffs = np.zeros(domain.shape)
        coeffs[index] = amplitude
        return cls(coeffs, domain)

    def _check(self, other: "ModalField") -> None:
        if other.domain != self.domain:
            raise DomainMismatch(f"fields live on different domains: {self.domain} vs {other.domain}")

    def __add__(self, other: "ModalField") -> "ModalField":
        self._check(other)
        return ModalField(self.coeffs + other.coeffs, self.domain)

    def __sub__(self, other: "ModalField") -> "ModalField":
        self._check(other)
        return ModalField(self.coeffs - other.coeffs, self.domain)

    def __mul__(self, scalar: Number) -> "ModalField":
        return ModalField(self.coeffs * float(scalar), self.domain)

    __rmul__ = __mul__

    def __truediv__(self, scalar: Number) -> "ModalField":
        return ModalField(self.coeffs / float(scalar), self.domain)

    def __neg__(self) -> "ModalField":
        return ModalField(-self.coeffs, self.domain)

    def allclose(self, other: "ModalField", rtol: float = 1e-12, atol: float = 1e-14) -> bool:
        return other.domain == self.domain and bool(
            np.allclose(self.coeffs, other.coeffs, rtol=rtol, atol=atol)
        )

    def __repr__(self) -> str:
        return f"<ModalField modes={self.domain.modes} max|c|={np.max(np.abs(self.coeffs)):.3e}>"


@dataclass(frozen=True, eq=False)
class GridField:
    """Point values on the interior collocation grid of a domain."""

    values: np.ndarray
    domain: BoxDomain
    points: Tuple[int, ...]

    def nodes(self) -> Tuple[np.ndarray, ...]:
        return tuple(
            np.arange(1, p + 1) * length / (p + 1) for p, length in zip(self.points, self.domain.lengths)
        )


# ---------------------------------------------------------------------------
# Linear operators and norms
# ---------------------------------------------------------------------------


def laplacian(f: ModalField) -> ModalField:
    return ModalField(-f.domain.eigenvalues * f.coeffs, f.domain)


def sobolev_seminorm(f: ModalField, s: float) -> float:
    """``(sum_k lambda_k**s |c_k|**2 prod_i L_i/2) ** 0.5``.

    ``s = 2`` gives ``||Laplacian f||`` and ``s = 3`` gives
    ``||grad Laplacian f||`` in L2.
    """
    weights = f.domain.eigenvalues**s
    return float(np.sqrt(np.sum(weights * f.coeffs**2) * f.domain.volume_factor))


def elliptic_solve(rhs: ModalField, c2: float) -> ModalField:
    """Solve ``-c2 Laplacian(u) = rhs`` exactly in the eigenbasis."""
    if not c2 > 0.0:
        raise SpectralError(f"c2 must be positive, got {c2}")
    return ModalField(rhs.coeffs / (c2 * rhs.domain.eigenvalues), rhs.domain)


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def _pad(coeffs: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    out = np.zeros(tuple(shape))
    out[tuple(slice(0, m) for m in coeffs.shape)] = coeffs
    return out


def to_grid(f: ModalField, dealias: Optional[bool] = None) -> GridField:
    """Values of ``f`` on the interior collocation grid."""
    points = f.domain.grid_points(dealias)
    values = fft.dstn(_pad(f.coeffs, points), type=1) / 2**f.domain.dim
    return GridField(values, f.domain, points)


def from_grid(grid: GridField) -> ModalField:
    """Sine interpolation of grid values, truncated to the domain's modes."""
    full = fft.dstn(np.asarray(grid.values, dtype=float), type=1) / np.prod(
        [p + 1 for p in grid.points]
    )
    return ModalField(full[tuple(slice(0, m) for m in grid.domain.modes)], grid.domain)


def evaluate_at(f: ModalField, points: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` at arbitrary points, shape ``(n, d)`` (or ``(n,)`` in 1D)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 and f.domain.dim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != f.domain.dim:
        raise SpectralError(f"points must have shape (n, {f.domain.dim}), got {pts.shape}")
    factors = [np.sin(np.outer(pts[:, i], f.domain.wavenumbers(i))) for i in range(f.domain.dim)]
    letters = "abc"[: f.domain.dim]
    subscripts = ",".join(f"p{c}" for c in letters) + f",{letters}->p"
    return np.einsum(subscripts, *factors, f.coeffs)


def grid_l2_norm(f: ModalField, dealias: Optional[bool] = None) -> float:
    """L2 norm from grid quadrature; matches ``sobolev_seminorm(f, 0)`` by discrete orthogonality."""
    grid = to_grid(f, dealias)
    cell = np.prod([length / (p + 1) for length, p in zip(f.domain.lengths, grid.points)])
    return float(np.sqrt(np.sum(grid.values**2) * cell))


def linf_norm(f: ModalField) -> float:
    """Maximum of ``|f|`` over the padded collocation grid."""
    values = to_grid(f, dealias=True).values
    return float(np.max(np.abs(values))) if values.size else 0.0


def boundary_gradient_residual(f: ModalField) -> float:
    """Maximum of the normal derivative ``|d f / d n|`` over all box faces.

    Sine sums vanish on the boundary but their normal derivatives generally
    do not; the residual measures how far a datum is from ``grad f = 0`` on
    the boundary.
    """
    domain = f.domain
    worst = 0.0
    for axis in range(domain.dim):
        k = domain.wavenumbers(axis)
        signs = (-1.0) ** np.arange(1, domain.modes[axis] + 1)
        for face_weights in (k, k * signs):
            face = np.tensordot(f.coeffs, face_weights, axes=([axis], [0]))
            if domain.dim == 1:
                worst = max(worst, abs(float(face)))
                continue
            rest = [p for i, p in enumerate(domain.grid_points(True)) if i != axis]
            values = fft.dstn(_pad(np.atleast_1d(face), rest), type=1) / 2 ** (domain.dim - 1)
            worst = max(worst, float(np.max(np.abs(values))))
    return worst


# ---------------------------------------------------------------------------
# Gradient products
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _sine_projection(modes: int, cosines: int) -> np.ndarray:
    """Matrix mapping cosine coefficients ``a = 0..cosines-1`` to sine modes ``m = 1..modes``.

    ``S[m, a] = (2/pi) m (1 - (-1)**(m+a)) / (m**2 - a**2)``, zero when ``m == a``.
    """
    m = np.arange(1, modes + 1, dtype=float)[:, None]
    a = np.arange(cosines, dtype=float)[None, :]
    parity = 1.0 - (-1.0) ** (m + a)
    denom = m**2 - a**2
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom != 0.0, 2.0 / np.pi * m * parity / denom, 0.0)
    return s


def _closed_grid_values(coeffs: np.ndarray, points: Sequence[int], cosine_axis: int) -> np.ndarray:
    """Values on the closed grid ``j = 0..P+1`` per axis.

    Along ``cosine_axis`` the coefficients multiply ``cos(k pi x / L)``
    (``k = 1..M``); along every other axis they multiply sines.
    """
    values = coeffs
    for axis, p in enumerate(points):
        m = values.shape[axis]
        moved = np.moveaxis(values, axis, 0)
        if axis == cosine_axis:
            dct_input = np.zeros((p + 2,) + moved.shape[1:])
            dct_input[1 : m + 1] = 0.5 * moved
            synth = fft.dct(dct_input, type=1, axis=0)
        else:
            dst_input = np.zeros((p,) + moved.shape[1:])
            dst_input[:m] = moved
            synth = np.zeros((p + 2,) + moved.shape[1:])
            synth[1 : p + 1] = fft.dst(dst_input, type=1, axis=0) / 2.0
        values = np.moveaxis(synth, 0, axis)
    return values


def _cosine_coefficients(values: np.ndarray) -> np.ndarray:
    """Cosine-series coefficients ``B_0..B_{P+1}`` along every axis of closed-grid values."""
    coeffs = values
    for axis in range(values.ndim):
        x = fft.idct(coeffs, type=1, axis=axis)
        x = np.moveaxis(x, axis, 0)
        x[1:-1] *= 2.0
        coeffs = np.moveaxis(x, 0, axis)
    return coeffs


def project_cosines(coeffs: np.ndarray, modes: Sequence[int]) -> np.ndarray:
    """Exact L2 projection of a tensor cosine series onto the sine modes."""
    out = coeffs
    for axis, m in enumerate(modes):
        proj = _sine_projection(m, out.shape[axis])
        out = np.moveaxis(np.tensordot(proj, np.moveaxis(out, axis, 0), axes=(1, 0)), 0, axis)
    return out


def gradient_dot(
    psi: ModalField, phi: ModalField, sigma: float, dealias: Optional[bool] = None
) -> ModalField:
    """``2 sigma grad(psi) . grad(phi)`` projected onto the sine basis.

    Each gradient component is synthesized on the closed grid, the products
    are summed pointwise, their cosine spectrum is recovered with a type-I
    cosine transform and projected onto sines in closed form. With
    dealiasing the grid has ``P + 1 = 2M`` intervals per axis and the
    projection is exact; without it ``P = M`` and the product aliases.

    Raises:
        DomainMismatch: If the fields live on different domains.
    """
    if psi.domain != phi.domain:
        raise DomainMismatch(f"fields live on different domains: {psi.domain} vs {phi.domain}")
    domain = psi.domain
    if sigma == 0.0:
        return ModalField.zeros(domain)
    points = domain.grid_points(dealias)

    product = np.zeros(tuple(p + 2 for p in points))
    for axis in range(domain.dim):
        k = domain.wavenumbers(axis)
        scale = k.reshape((-1,) + (1,) * (domain.dim - axis - 1))
        d_psi = _closed_grid_values(psi.coeffs * scale, points, axis)
        d_phi = _closed_grid_values(phi.coeffs * scale, points, axis) if phi is not psi else d_psi
        product += d_psi * d_phi

    cosine = _cosine_coefficients(product)
    return ModalField(2.0 * sigma * project_cosines(cosine, domain.modes), domain)
