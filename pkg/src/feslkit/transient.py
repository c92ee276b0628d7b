"""Newmark-beta time integration and load-history construction.

Load histories are plain arrays whose last axis is time: shape
``(ndof, n_steps + 1)``, or ``(ndof, r, n_steps + 1)`` when ``r``
right-hand sides are integrated together.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._validation import check_square


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * dt`` for ``k = 0..n_steps``.

    Objective and constraints are evaluated on the inclusive index window
    ``[window_start, window_end]``.
    """

    dt: float
    n_steps: int
    window_start: int = 0
    window_end: int = None

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        end = self.n_steps if self.window_end is None else int(self.window_end)
        object.__setattr__(self, "window_end", end)
        if not 0 <= self.window_start <= end <= self.n_steps:
            raise ValueError(
                f"invalid window [{self.window_start}, {end}] for {self.n_steps} steps"
            )

    @classmethod
    def from_horizon(cls, dt, t_end, window=None):
        """Grid covering ``[0, t_end]`` with an optional time window ``(t0, t1)``."""
        n_steps = int(round(t_end / dt))
        if not np.isclose(n_steps * dt, t_end, rtol=1e-9, atol=1e-12):
            raise ValueError(f"horizon {t_end} is not a multiple of dt={dt}")
        if window is None:
            return cls(dt, n_steps)
        return cls(dt, n_steps, int(round(window[0] / dt)), int(round(window[1] / dt)))

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def window(self):
        return slice(self.window_start, self.window_end + 1)

    @property
    def n_window(self):
        return self.window_end - self.window_start + 1


@dataclass(frozen=True)
class ResponseHistory:
    """Displacement, velocity and acceleration; time is the last axis."""

    u: np.ndarray
    v: np.ndarray
    a: np.ndarray

    def residual(self, matrices, loads):
        """Equation-of-motion residual ``M a + C v + K u - p`` at every step."""
        return (np.tensordot(matrices.mass, self.a, axes=(1, 0))
                + np.tensordot(matrices.damping, self.v, axes=(1, 0))
                + np.tensordot(matrices.stiffness, self.u, axes=(1, 0))
                - loads)


class NewmarkIntegrator:
    """Newmark-beta integrator with the effective stiffness factorized once.

    The default ``gamma=1/2, beta=1/4`` is the average-acceleration scheme.
    One instance may integrate any number of load histories for the same
    system; it is not modified by :meth:`integrate`.
    """

    def __init__(self, matrices, dt, gamma=0.5, beta=0.25):
        if not dt > 0.0:
            raise ValueError(f"dt must be positive, got {dt!r}")
        self.mass = check_square(matrices.mass, "mass")
        n = self.mass.shape[0]
        self.damping = check_square(matrices.damping, "damping", n)
        self.stiffness = check_square(matrices.stiffness, "stiffness", n)
        self.dt, self.gamma, self.beta = dt, gamma, beta
        self.c0 = 1.0 / (beta * dt**2)
        self.c1 = gamma / (beta * dt)
        self.c2 = 1.0 / (beta * dt)
        self.c3 = 1.0 / (2.0 * beta) - 1.0
        self.c4 = gamma / beta - 1.0
        self.c5 = dt * (gamma / (2.0 * beta) - 1.0)
        k_eff = self.stiffness + self.c1 * self.damping + self.c0 * self.mass
        try:
            self._k_eff = linalg.cho_factor(k_eff, lower=True, check_finite=False)
            self._mass_fac = linalg.cho_factor(self.mass, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "effective stiffness or mass is not positive definite"
            ) from exc

    @property
    def ndof(self):
        return self.mass.shape[0]

    def integrate(self, loads):
        """Integrate from rest under ``loads`` (time on the last axis)."""
        loads = np.asarray(loads, dtype=float)
        if loads.shape[0] != self.ndof:
            raise ValueError(
                f"load history has {loads.shape[0]} rows, system has {self.ndof} DOFs"
            )
        shape = loads.shape
        p = loads.reshape(self.ndof, -1, shape[-1])
        nt = shape[-1]
        u = np.zeros_like(p)
        v = np.zeros_like(p)
        a = np.zeros_like(p)
        # zero initial displacement and velocity: a_0 from equilibrium
        a[:, :, 0] = linalg.cho_solve(self._mass_fac, p[:, :, 0], check_finite=False)
        M, C = self.mass, self.damping
        c0, c1, c2, c3, c4, c5 = self.c0, self.c1, self.c2, self.c3, self.c4, self.c5
        fac = self._k_eff
        for k in range(nt - 1):
            uk, vk, ak = u[:, :, k], v[:, :, k], a[:, :, k]
            rhs = (p[:, :, k + 1]
                   + M @ (c0 * uk + c2 * vk + c3 * ak)
                   + C @ (c1 * uk + c4 * vk + c5 * ak))
            un = linalg.cho_solve(fac, rhs, check_finite=False)
            du = un - uk
            u[:, :, k + 1] = un
            a[:, :, k + 1] = c0 * du - c2 * vk - c3 * ak
            v[:, :, k + 1] = c1 * du - c4 * vk - c5 * ak
        return ResponseHistory(u.reshape(shape), v.reshape(shape), a.reshape(shape))


def newmark_solve(matrices, loads, grid):
    """Average-acceleration Newmark response from rest on ``grid``."""
    loads = np.asarray(loads, dtype=float)
    if loads.shape[-1] != grid.n_steps + 1:
        raise ValueError(
            f"load history has {loads.shape[-1]} samples, grid needs {grid.n_steps + 1}"
        )
    return NewmarkIntegrator(matrices, grid.dt).integrate(loads)


def ground_motion_loads(mass, record, grid):
    """Inertial loads ``-M e a_g`` with a unit influence vector."""
    mass = check_square(mass, "mass")
    record = np.asarray(record, dtype=float).ravel()
    needed = grid.n_steps + 1
    if record.size < needed:
        raise ValueError(f"ground-motion record has {record.size} samples, grid needs {needed}")
    influence = mass @ np.ones(mass.shape[0])
    return -np.outer(influence, record[:needed])


@dataclass(frozen=True)
class MultiSineLoad:
    """``p(t) = amplitude * phi(t) * (1 - exp(-ramp_rate t))`` with
    ``phi(t) = a0 + sum_i a_i sin(2 pi f_i t)``."""

    a0: float
    coefficients: tuple
    frequencies: tuple
    amplitude: float
    ramp_rate: float = 0.2

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        phi = np.full_like(t, self.a0)
        for ai, fi in zip(self.coefficients, self.frequencies):
            phi = phi + ai * np.sin(2.0 * np.pi * fi * t)
        return self.amplitude * phi * (1.0 - np.exp(-self.ramp_rate * t))


ROOF_LOAD_1 = MultiSineLoad(0.75, (0.10, 0.05, 0.10), (6.0, 1.2, 0.06), 25e5)
ROOF_LOAD_2 = MultiSineLoad(0.80, (0.05, 0.10, 0.05), (2.4, 1.8, 0.03), 25e5)


def multi_sine_history(load, grid):
    """Sample ``load`` at every grid time."""
    return load(grid.times)


def roof_load_pattern(model, windward=(6, 8, 10), leeward=(7, 9, 10), ridge=10, eave=1):
    """Unit nodal force vector normal to the roof slopes.

    Windward nodes are pushed into the roof, leeward nodes pulled away from
    it. Node numbers are 1-based; the slope angle is taken from the line
    ``eave -> ridge``.
    """
    if model.kind != "planar_truss":
        raise ValueError("roof loads require a planar_truss model")
    rise = model.nodes[ridge - 1] - model.nodes[eave - 1]
    theta = np.arctan2(abs(rise[1]), abs(rise[0]))
    s, c = np.sin(theta), np.cos(theta)
    full = np.zeros(3 * model.nodes.shape[0])
    for n in windward:
        full[3 * (n - 1):3 * (n - 1) + 2] += (s, -c)
    for n in leeward:
        full[3 * (n - 1):3 * (n - 1) + 2] += (s, c)
    fixed = np.asarray(model.supports, dtype=int)
    if np.any(full[fixed] != 0.0):
        raise ValueError("roof loads applied to a supported DOF")
    return full[model.free_dofs]


def truss_load_cases(model, grid, waveforms=(ROOF_LOAD_1, ROOF_LOAD_2)):
    """One load history per waveform, all sharing the roof load pattern."""
    pattern = roof_load_pattern(model)
    return [np.outer(pattern, multi_sine_history(w, grid)) for w in waveforms]
