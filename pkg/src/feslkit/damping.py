"""Rayleigh damping fitted to the first two natural frequencies, and its
design derivatives."""

from typing import NamedTuple

import numpy as np
from scipy import linalg

from ._validation import check_square


class RepeatedEigenvalueError(ValueError):
    """The two fitting frequencies coincide, so the coefficients are undefined."""


class RayleighDamping(NamedTuple):
    matrix: np.ndarray
    alpha_m: float
    alpha_k: float
    omega: np.ndarray
    modes: np.ndarray


class RayleighSensitivity(NamedTuple):
    dalpha_m: float
    dalpha_k: float
    ddamping: np.ndarray
    domega: np.ndarray


def natural_modes(mass, stiffness):
    """Solve ``(K - w^2 M) phi = 0``.

    Returns the circular frequencies in ascending order and the mode shapes
    as columns, normalized so that ``phi.T @ M @ phi = I``.
    """
    mass = check_square(mass, "mass")
    stiffness = check_square(stiffness, "stiffness", mass.shape[0])
    try:
        eigvals, modes = linalg.eigh(stiffness, mass)
    except linalg.LinAlgError as exc:
        raise ValueError("mass matrix is not positive definite") from exc
    if eigvals[0] <= 0.0:
        raise ValueError("stiffness matrix is not positive definite")
    return np.sqrt(eigvals), modes


def rayleigh_coefficients(omega1, omega2, xi):
    """Coefficients giving damping ratio ``xi`` at both ``omega1`` and ``omega2``."""
    total = omega1 + omega2
    return 2.0 * xi * omega1 * omega2 / total, 2.0 * xi / total


def rayleigh_damping(mass, stiffness, xi):
    """Build ``C = alpha_m M + alpha_k K`` for a target damping ratio ``xi``."""
    omega, modes = natural_modes(mass, stiffness)
    if omega.size < 2:
        raise ValueError("Rayleigh damping needs at least two degrees of freedom")
    alpha_m, alpha_k = rayleigh_coefficients(omega[0], omega[1], xi)
    matrix = alpha_m * np.asarray(mass, float) + alpha_k * np.asarray(stiffness, float)
    return RayleighDamping(matrix, alpha_m, alpha_k, omega, modes)


def damping_ratio(alpha_m, alpha_k, omega):
    """Modal damping ratio of a Rayleigh matrix at frequency ``omega``."""
    return 0.5 * (alpha_m / omega + alpha_k * omega)


def frequency_sensitivity(omega, modes, dmass, dstiffness):
    """Derivatives of the circular frequencies for mass-normalized modes."""
    omega = np.asarray(omega, float)
    dmass = np.asarray(dmass, float)
    dstiffness = np.asarray(dstiffness, float)
    out = np.empty_like(omega)
    for j, w in enumerate(omega):
        phi = modes[:, j]
        out[j] = phi @ (dstiffness - w**2 * dmass) @ phi / (2.0 * w)
    return out


def rayleigh_coefficient_sensitivity(mass, stiffness, dmass, dstiffness, omega, modes, xi,
                                     alpha_m=None, alpha_k=None):
    """Derivatives of the Rayleigh coefficients and of the damping matrix.

    ``modes`` must be mass-normalized and the first two frequencies distinct.
    """
    omega = np.asarray(omega, float)
    w1, w2 = omega[0], omega[1]
    if abs(w2 - w1) <= 1e-8 * max(abs(w2), 1.0):
        raise RepeatedEigenvalueError(
            f"repeated natural frequencies w1={w1!r}, w2={w2!r}"
        )
    if alpha_m is None or alpha_k is None:
        alpha_m, alpha_k = rayleigh_coefficients(w1, w2, xi)
    dw = frequency_sensitivity(omega[:2], modes[:, :2], dmass, dstiffness)
    denom = (w1 + w2) ** 2
    dalpha_m = xi * 2.0 * w2**2 / denom * dw[0] + xi * 2.0 * w1**2 / denom * dw[1]
    dalpha_k = -xi * 2.0 / denom * (dw[0] + dw[1])
    ddamping = (dalpha_m * np.asarray(mass, float) + alpha_m * np.asarray(dmass, float)
                + dalpha_k * np.asarray(stiffness, float)
                + alpha_k * np.asarray(dstiffness, float))
    return RayleighSensitivity(dalpha_m, dalpha_k, ddamping, dw)
