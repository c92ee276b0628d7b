"""Objective and constraint evaluators with analytic design gradients.

Every evaluator takes displacements restricted to the evaluation window
(time on the last axis) and, optionally, their design derivatives with the
variable axis right after the DOF axis. The same code serves the dynamic
problem (``u`` from time integration) and the static sub-problems (``u``
from equivalent static loads).
"""

from dataclasses import dataclass

import numpy as np

from .models import element_geometry

LABEL_DTYPE = np.dtype([("kind", "U8"), ("member", np.int64), ("step", np.int64),
                        ("case", np.int64)])


@dataclass(frozen=True)
class ConstraintBundle:
    """Inequality constraints ``values <= 0`` with their Jacobian."""

    values: np.ndarray
    jacobian: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return self.values.size

    @property
    def max_value(self):
        return float(self.values.max()) if self.values.size else -np.inf

    @classmethod
    def concatenate(cls, bundles):
        bundles = list(bundles)
        if not bundles:
            return cls(np.zeros(0), np.zeros((0, 0)), np.zeros(0, LABEL_DTYPE))
        jac = [b.jacobian for b in bundles]
        jac = None if any(j is None for j in jac) else np.vstack(jac)
        return cls(np.concatenate([b.values for b in bundles]), jac,
                   np.concatenate([b.labels for b in bundles]))


@dataclass(frozen=True)
class StressState:
    sigma: np.ndarray
    sigma_buck: np.ndarray


def make_labels(kind, members, steps, case):
    """Labels for a ``(member, step)`` grid flattened in C order."""
    mm, ss = np.meshgrid(np.asarray(members), np.asarray(steps), indexing="ij")
    out = np.empty(mm.size, LABEL_DTYPE)
    out["kind"] = kind
    out["member"] = mm.ravel()
    out["step"] = ss.ravel()
    out["case"] = case
    return out


def _flatten_jacobian(dvalues):
    """``(member, n, step)`` derivatives -> ``(member*step, n)`` rows."""
    if dvalues is None:
        return None
    return np.moveaxis(dvalues, 1, -1).reshape(-1, dvalues.shape[1])


def compliance(k, u, dt, dk=None, du=None):
    """``dt * sum_k k u_k^2`` over the window of a single-DOF response.

    ``dk`` holds ``dk/dx_i``; ``du`` has shape ``(n, n_window)``. The
    gradient is returned only when both are given.
    """
    u = np.asarray(u, dtype=float).ravel()
    if u.size == 0:
        raise ValueError("empty evaluation window")
    value = dt * k * float(u @ u)
    if dk is None or du is None:
        return value, None
    du = np.asarray(du, dtype=float).reshape(-1, u.size)
    grad = dt * (np.asarray(dk, float) * float(u @ u) + 2.0 * k * (du @ u))
    return value, grad


DRIFT_MATRIX = np.array([[1.0, 0.0], [-1.0, 1.0]])


def drift_constraints(u, d_max, du=None, steps=None, case=0, drift_matrix=DRIFT_MATRIX):
    """``|D u_k| / d_max - 1`` per story and step.

    At ``d = 0`` the subgradient ``sign(0) = 0`` is used.
    """
    if d_max <= 0.0:
        raise ValueError("d_max must be positive")
    u = np.asarray(u, dtype=float)
    if u.shape[0] != drift_matrix.shape[1]:
        raise ValueError("drift matrix does not match the number of DOFs")
    d = drift_matrix @ u
    values = np.abs(d) / d_max - 1.0
    steps = np.arange(u.shape[-1]) if steps is None else steps
    labels = make_labels("drift", np.arange(d.shape[0]), steps, case)
    jac = None
    if du is not None:
        dd = np.einsum("sj,jit->sit", drift_matrix, du)
        jac = _flatten_jacobian(np.sign(d)[:, None, :] / d_max * dd)
    return ConstraintBundle(values.ravel(), jac, labels)


def _node_translations(model, u):
    """Expand free-DOF vectors to ``(n_nodes, 2, ...)`` nodal translations."""
    full = np.zeros((3 * model.nodes.shape[0],) + u.shape[1:])
    full[model.free_dofs] = u
    full = full.reshape((model.nodes.shape[0], 3) + u.shape[1:])
    return full[:, :2]


def axial_stress(model, u, du=None):
    """Axial stress from the change of bar length, and its design derivative.

    ``u`` has shape ``(ndof, n_window)``; ``du`` ``(ndof, n, n_window)``.
    Returns ``sigma`` of shape ``(n_bars, n_window)`` and ``dsigma`` of
    shape ``(n_bars, n, n_window)`` (or ``None``).
    """
    if model.kind != "planar_truss":
        raise ValueError("axial stresses require a planar_truss model")
    u = np.asarray(u, dtype=float)
    n1, n2 = model.elements[:, 0], model.elements[:, 1]
    length0, _ = element_geometry(model)
    disp = _node_translations(model, u)
    x0 = model.nodes
    # bar vector X2 - X1 in the deformed configuration: (bars, 2, steps)
    chord0 = (x0[n2] - x0[n1])[..., None]
    rel = disp[n2] - disp[n1]
    chord = chord0 + rel
    length = np.sqrt(np.sum(chord**2, axis=1))
    if np.any(length <= 1e-12 * length0[:, None]):
        raise FloatingPointError("degenerate bar length in deformed configuration")
    # l - l0 = (l^2 - l0^2) / (l + l0), free of cancellation for small strains
    elongation = np.sum(rel * (2.0 * chord0 + rel), axis=1) / (length + length0[:, None])
    youngs = model.youngs[:, None]
    sigma = youngs * elongation / length0[:, None]
    if du is None:
        return sigma, None
    ddisp = _node_translations(model, np.asarray(du, dtype=float))  # (nodes, 2, n, steps)
    dchord = ddisp[n2] - ddisp[n1]
    dlength = np.einsum("bct,bcit->bit", chord, dchord) / length[:, None, :]
    dsigma = youngs[:, None] * dlength / length0[:, None, None]
    return sigma, dsigma


def buckling_stress(model, x):
    """Euler buckling stress of circular bars and its design gradient."""
    length0, _ = element_geometry(model)
    sizes = model.linking.element_sizes(x)
    coef = np.pi**2 * model.youngs / (16.0 * length0**2)
    sigma_buck = coef * sizes**2
    dsigma_buck = (2.0 * coef * sizes)[:, None] * model.linking.matrix
    return sigma_buck, dsigma_buck


def stress_constraints(sigma, sigma_max, dsigma=None, steps=None, case=0):
    """``|sigma| / sigma_max - 1`` per bar and step."""
    sigma = np.asarray(sigma, dtype=float)
    steps = np.arange(sigma.shape[-1]) if steps is None else steps
    labels = make_labels("stress", np.arange(sigma.shape[0]), steps, case)
    values = np.abs(sigma) / sigma_max - 1.0
    jac = None
    if dsigma is not None:
        jac = _flatten_jacobian(np.sign(sigma)[:, None, :] / sigma_max * dsigma)
    return ConstraintBundle(values.ravel(), jac, labels)


def buckling_constraints(model, x, sigma, dsigma=None, steps=None, case=0):
    """``-1 - sigma / sigma_buck`` per bar and step (tension positive)."""
    sigma = np.asarray(sigma, dtype=float)
    sigma_buck, dsigma_buck = buckling_stress(model, x)
    steps = np.arange(sigma.shape[-1]) if steps is None else steps
    labels = make_labels("buckling", np.arange(sigma.shape[0]), steps, case)
    values = -1.0 - sigma / sigma_buck[:, None]
    jac = None
    if dsigma is not None:
        sb = sigma_buck[:, None, None]
        dq = (sigma[:, None, :] * dsigma_buck[:, :, None] - dsigma * sb) / sb**2
        jac = _flatten_jacobian(dq)
    return ConstraintBundle(values.ravel(), jac, labels)
