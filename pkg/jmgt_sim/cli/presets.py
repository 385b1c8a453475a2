"""Initial data and source presets for run configs."""

import logging
from typing import Tuple

import numpy as np

from ..core.solver import SourceSpec
from ..core.spectral import BoxDomain, GridField, ModalField, from_grid
from .config import InitialData, SourceConfig

logger = logging.getLogger(__name__)


def _grid_projection(domain: BoxDomain, profile) -> ModalField:
    """Sine coefficients of ``profile(*axes)`` sampled on the padded interior grid."""
    points = domain.grid_points(True)
    axes = np.meshgrid(*domain.nodes(True), indexing="ij")
    return from_grid(GridField(profile(*axes), domain, points))


def sine_cubed(domain: BoxDomain, amplitude: float) -> ModalField:
    """``A prod_i sin^3(pi x_i / L_i)`` via ``sin^3 = (3 sin s - sin 3s) / 4``.

    The normal derivative and the Laplacian of this field vanish on the
    boundary. Exact whenever every axis carries at least three modes.
    """
    factors = []
    for m in domain.modes:
        axis = np.zeros(m)
        axis[0] = 0.75
        if m >= 3:
            axis[2] = -0.25
        factors.append(axis)
    coeffs = factors[0]
    for axis in factors[1:]:
        coeffs = np.multiply.outer(coeffs, axis)
    if min(domain.modes) < 3:
        logger.warning(f"sine_cubed truncated on modes {domain.modes}")
    return ModalField(amplitude * np.asarray(coeffs, dtype=float).reshape(domain.shape), domain)


def smooth_bump(domain: BoxDomain, amplitude: float, decay: float) -> ModalField:
    """Gaussian centred in the box times the ``sin^3`` envelope, projected on the modes."""
    lengths = domain.lengths

    def profile(*axes: np.ndarray) -> np.ndarray:
        value = np.ones_like(axes[0])
        for x, length in zip(axes, lengths):
            s = x / length
            value = value * np.exp(-decay * (2.0 * s - 1.0) ** 2) * np.sin(np.pi * s) ** 3
        return amplitude * value

    return _grid_projection(domain, profile)


def initial_fields(domain: BoxDomain, initial: InitialData) -> Tuple[ModalField, ModalField]:
    """``(psi0, psi2)`` for a preset.

    ``psi2`` follows the same spatial pattern as ``psi0`` scaled to
    ``psi2_amplitude`` (the zero preset uses the ``sin^3`` pattern).
    """
    preset = initial.preset
    if preset == "zero":
        psi0 = ModalField.zeros(domain)
        pattern = sine_cubed(domain, 1.0)
    elif preset == "single_mode":
        psi0 = ModalField.single_mode(domain, initial.k, initial.amplitude)
        pattern = ModalField.single_mode(domain, initial.k, 1.0)
    elif preset == "smooth_bump":
        psi0 = smooth_bump(domain, initial.amplitude, initial.decay)
        pattern = smooth_bump(domain, 1.0, initial.decay)
    elif preset == "sine_cubed":
        psi0 = sine_cubed(domain, initial.amplitude)
        pattern = sine_cubed(domain, 1.0)
    else:
        raise ValueError(f"unknown initial preset {preset!r}")
    psi2 = pattern * initial.psi2_amplitude if initial.psi2_amplitude else ModalField.zeros(domain)
    return psi0, psi2


def source_spec(domain: BoxDomain, source: SourceConfig) -> SourceSpec:
    if source.preset == "none" or source.amplitude == 0.0:
        return SourceSpec.none()
    return SourceSpec.decaying_mode(domain, source.k, source.amplitude, source.rate)
