"""Direct differentiation of the transient response, and a finite-difference
oracle for it."""

from dataclasses import dataclass

import numpy as np

from .damping import rayleigh_coefficient_sensitivity  # noqa: F401  (public re-export)
from .models import MatrixSensitivity
from .transient import NewmarkIntegrator, ResponseHistory


@dataclass(frozen=True)
class SensitivityHistory:
    """Derivatives of ``u``, ``v`` and ``a`` with respect to design variables.

    For a single variable the arrays share the response shape. For the
    batched form the variable axis is inserted after the DOF axis:
    ``(ndof, n_variables, ..., n_steps + 1)``.
    """

    du: np.ndarray
    dv: np.ndarray
    da: np.ndarray
    one_sided: bool = False


def pseudo_loads(dmass, ddamping, dstiffness, response, dload=None):
    """Right-hand side of the sensitivity equation for every design variable.

    ``dmass``, ``ddamping`` and ``dstiffness`` are stacked as
    ``(n_variables, ndof, ndof)``; the result has shape
    ``(ndof, n_variables, *response.u.shape[1:])``.
    """
    pbar = -(np.einsum("ijk,k...->ji...", dmass, response.a)
             + np.einsum("ijk,k...->ji...", ddamping, response.v)
             + np.einsum("ijk,k...->ji...", dstiffness, response.u))
    if dload is not None:
        pbar = pbar + dload
    return pbar


def direct_sensitivities(matrices, dmass, ddamping, dstiffness, response, grid=None,
                         dload=None, integrator=None):
    """Response derivatives for all design variables at once.

    The same Newmark scheme and factorized effective stiffness as the primal
    solve are used, which makes the result the exact derivative of the
    discrete trajectory.
    """
    if integrator is None:
        if grid is None:
            raise ValueError("either grid or integrator is required")
        integrator = NewmarkIntegrator(matrices, grid.dt)
    dmass, ddamping, dstiffness = (np.asarray(a, float) for a in (dmass, ddamping, dstiffness))
    if dmass.ndim != 3 or dmass.shape[1:] != (integrator.ndof, integrator.ndof):
        raise ValueError("matrix derivatives must be stacked as (n, ndof, ndof)")
    if response.u.shape[0] != integrator.ndof:
        raise ValueError("response does not match the system size")
    pbar = pseudo_loads(dmass, ddamping, dstiffness, response, dload)
    hist = integrator.integrate(pbar)
    return SensitivityHistory(hist.u, hist.v, hist.a)


def direct_sensitivity(matrices, msens: MatrixSensitivity, response, dload=None, grid=None,
                       integrator=None):
    """Response derivative with respect to the single variable of ``msens``."""
    stacked = [np.asarray(m, float)[None] for m in (msens.dmass, msens.ddamping, msens.dstiffness)]
    if dload is not None:
        dload = np.asarray(dload, float)[:, None]
    out = direct_sensitivities(matrices, *stacked, response, grid=grid, dload=dload,
                               integrator=integrator)
    return SensitivityHistory(out.du[:, 0], out.dv[:, 0], out.da[:, 0])


def fd_step(x, i, h=None):
    return 1e-6 * max(1.0, abs(x[i])) if h is None else h


def fd_response_gradient(simulate, x, i, h=None, lower=None, upper=None):
    """Central-difference derivative of a simulated trajectory.

    ``simulate(x)`` must return a :class:`ResponseHistory`. If the central
    stencil leaves ``[lower, upper]`` a one-sided difference is used and the
    result is flagged with ``one_sided=True``.
    """
    x = np.asarray(x, dtype=float)
    h = fd_step(x, i, h)
    e = np.zeros_like(x)
    e[i] = h
    lo = -np.inf if lower is None else lower[i]
    hi = np.inf if upper is None else upper[i]
    if x[i] - h >= lo and x[i] + h <= hi:
        rp, rm = simulate(x + e), simulate(x - e)
        scale, one_sided = 2.0 * h, False
    elif x[i] + h <= hi:
        rp, rm = simulate(x + e), simulate(x)
        scale, one_sided = h, True
    elif x[i] - h >= lo:
        rp, rm = simulate(x), simulate(x - e)
        scale, one_sided = h, True
    else:
        raise ValueError(f"step {h} does not fit between the bounds of variable {i}")
    return SensitivityHistory(
        (rp.u - rm.u) / scale, (rp.v - rm.v) / scale, (rp.a - rm.a) / scale, one_sided
    )


def relative_l2_error(approx, reference):
    ref = np.linalg.norm(reference)
    if ref == 0.0:
        return float(np.linalg.norm(approx))
    return float(np.linalg.norm(np.asarray(approx) - reference) / ref)


__all__ = [
    "ResponseHistory",
    "SensitivityHistory",
    "direct_sensitivities",
    "direct_sensitivity",
    "fd_response_gradient",
    "pseudo_loads",
    "rayleigh_coefficient_sensitivity",
    "relative_l2_error",
]
