"""Dynamic response optimization problems and their static approximations.

A :class:`StructuralProblem` couples a model, a time grid, design-independent
load cases and a set of response functions. It exposes the original dynamic
problem and the equivalent-static-load sub-problems as :class:`NlpProblem`
instances that share the same objective/constraint evaluators.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._validation import check_design
from .models import (assemble, assemble_all_sensitivities, roof_truss_model,
                     shear_frame_model, two_bar_model, volume)
from .nlp import NlpProblem
from .responses import (ConstraintBundle, LABEL_DTYPE, axial_stress, buckling_constraints,
                        compliance, drift_constraints, stress_constraints)
from .sensitivity import SensitivityHistory, direct_sensitivities
from .transient import NewmarkIntegrator, TimeGrid, ground_motion_loads, truss_load_cases


@dataclass(frozen=True)
class Analysis:
    """Transient analysis (and optionally direct sensitivities) at one design."""

    x: np.ndarray
    matrices: object
    dmass: np.ndarray
    ddamping: np.ndarray
    dstiffness: np.ndarray
    responses: list
    sensitivities: list = None

    def window_displacements(self, grid):
        return [r.u[..., grid.window] for r in self.responses]

    def window_sensitivities(self, grid):
        if self.sensitivities is None:
            return None
        return [s.du[..., grid.window] for s in self.sensitivities]


@dataclass(frozen=True)
class FunctionValues:
    objective: float
    objective_gradient: np.ndarray
    constraints: ConstraintBundle


class ResponseFunctions:
    """Objective and constraints evaluated from windowed displacements.

    ``stiffness``/``dstiffness`` are ``K(x)`` and its stacked derivatives at
    the evaluation design; ``displacements`` is one ``(ndof, n_window)``
    array per load case and ``derivatives`` one ``(ndof, n, n_window)``
    array per case, or ``None`` when gradients are not requested.
    """

    def __call__(self, model, x, grid, stiffness, dstiffness, displacements, derivatives=None):
        raise NotImplementedError


class CompliancePlusVolume(ResponseFunctions):
    """Windowed compliance of a single-DOF model under a volume limit."""

    def __init__(self, max_volume=1.0):
        self.max_volume = max_volume

    def __call__(self, model, x, grid, stiffness, dstiffness, displacements, derivatives=None):
        u = displacements[0][0]
        dk = dstiffness[:, 0, 0]
        du = None if derivatives is None else derivatives[0][0]
        f, grad = compliance(stiffness[0, 0], u, grid.dt, dk, du)
        vol, dvol = volume(model, x)
        label = np.zeros(1, LABEL_DTYPE)
        label["kind"] = "volume"
        bundle = ConstraintBundle(np.array([vol / self.max_volume - 1.0]),
                                  (dvol / self.max_volume)[None, :], label)
        return FunctionValues(f, grad, bundle)


class VolumePlusDrift(ResponseFunctions):
    def __init__(self, max_drift=0.1):
        self.max_drift = max_drift

    def __call__(self, model, x, grid, stiffness, dstiffness, displacements, derivatives=None):
        f, grad = volume(model, x)
        steps = np.arange(grid.window_start, grid.window_end + 1)
        bundles = []
        for case, u in enumerate(displacements):
            du = None if derivatives is None else derivatives[case]
            bundles.append(drift_constraints(u, self.max_drift, du, steps, case))
        return FunctionValues(f, grad, ConstraintBundle.concatenate(bundles))


class VolumePlusStress(ResponseFunctions):
    def __init__(self, max_stress=200e6):
        self.max_stress = max_stress

    def __call__(self, model, x, grid, stiffness, dstiffness, displacements, derivatives=None):
        f, grad = volume(model, x)
        steps = np.arange(grid.window_start, grid.window_end + 1)
        bundles = []
        for case, u in enumerate(displacements):
            du = None if derivatives is None else derivatives[case]
            sigma, dsigma = axial_stress(model, u, du)
            bundles.append(stress_constraints(sigma, self.max_stress, dsigma, steps, case))
            bundles.append(buckling_constraints(model, x, sigma, dsigma, steps, case))
        return FunctionValues(f, grad, ConstraintBundle.concatenate(bundles))


class _LastCall:
    """Single-entry memo keyed on the exact bytes of the design."""

    def __init__(self, fn):
        self.fn = fn
        self.key = None
        self.value = None

    def __call__(self, x):
        key = np.asarray(x, float).tobytes()
        if key != self.key:
            self.value = self.fn(np.array(x, dtype=float))
            self.key = key
        return self.value


class StructuralProblem:
    """Dynamic response optimization problem.

    Parameters
    ----------
    model : ModelDefinition
    lower, upper : array_like
        Box bounds of the design variables.
    grid : TimeGrid
    load_cases : list of ndarray
        Design-independent load histories, each ``(ndof, n_steps + 1)``.
    functions : ResponseFunctions
    x0 : array_like, optional
        Default starting design.
    """

    def __init__(self, model, lower, upper, grid, load_cases, functions, x0=None, name=""):
        self.model = model
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.grid = grid
        self.load_cases = [np.asarray(p, dtype=float) for p in load_cases]
        for p in self.load_cases:
            if p.shape != (model.ndof, grid.n_steps + 1):
                raise ValueError(
                    f"load case shape {p.shape} != {(model.ndof, grid.n_steps + 1)}")
        self.functions = functions
        self.x0 = None if x0 is None else check_design(x0, self.lower, self.upper)
        self.name = name
        self.n_tha = 0
        self.n_transient_solves = 0
        self.n_sensitivity_solves = 0
        self._analysis_memo = {}

    @property
    def n(self):
        return self.lower.size

    @property
    def n_cases(self):
        return len(self.load_cases)

    def reset_counters(self):
        self.n_tha = self.n_transient_solves = self.n_sensitivity_solves = 0
        self._analysis_memo.clear()

    # -- dynamic analysis -------------------------------------------------

    def simulate(self, x, case=0):
        """Transient response for one load case (not counted, not cached)."""
        matrices = assemble(self.model, x)
        return NewmarkIntegrator(matrices, self.grid.dt).integrate(self.load_cases[case])

    def analyze(self, x, sensitivities=True):
        """Transient analysis at ``x`` for all load cases, plus direct
        sensitivities if requested. Repeated calls at the same design reuse
        the previous result."""
        x = np.array(x, dtype=float)
        key = (x.tobytes(), bool(sensitivities))
        memo = self._analysis_memo
        if key in memo:
            return memo[key]
        if sensitivities and (x.tobytes(), False) in memo:
            base = memo[(x.tobytes(), False)]
            matrices, integrator, responses = base.matrices, None, base.responses
        else:
            matrices = assemble(self.model, x)
            integrator = NewmarkIntegrator(matrices, self.grid.dt)
            responses = [integrator.integrate(p) for p in self.load_cases]
            self.n_tha += 1
            self.n_transient_solves += len(responses)
        dmass, ddamping, dstiffness = assemble_all_sensitivities(self.model, x, matrices)
        sens = None
        if sensitivities:
            if integrator is None:
                integrator = NewmarkIntegrator(matrices, self.grid.dt)
            sens = [direct_sensitivities(matrices, dmass, ddamping, dstiffness, r,
                                         integrator=integrator) for r in responses]
            self.n_sensitivity_solves += self.n * len(responses)
        result = Analysis(x, matrices, dmass, ddamping, dstiffness, responses, sens)
        if len(memo) > 8:
            memo.clear()
        memo[key] = result
        return result

    def dynamic_values(self, x, gradients=True):
        a = self.analyze(x, sensitivities=gradients)
        derivs = a.window_sensitivities(self.grid) if gradients else None
        return self.functions(self.model, a.x, self.grid, a.matrices.stiffness, a.dstiffness,
                              a.window_displacements(self.grid), derivs)

    def dynamic_nlp(self):
        """The original problem: every evaluation runs transient analyses."""
        values = _LastCall(lambda x: self.dynamic_values(x, True))

        def objective(x):
            v = values(x)
            return v.objective, v.objective_gradient

        def constraints(x):
            v = values(x)
            return v.constraints.values, v.constraints.jacobian

        return NlpProblem(self.lower, self.upper, objective, constraints)

    # -- static sub-problem -----------------------------------------------

    def static_values(self, x, load_sets, gradients=True):
        from .esl import static_displacement_sensitivity, static_displacements

        x = np.asarray(x, dtype=float)
        matrices = assemble(self.model, x)
        _, _, dstiffness = assemble_all_sensitivities(self.model, x, matrices)
        factor = linalg.cho_factor(matrices.stiffness, lower=True, check_finite=False)
        disp, derivs = [], [] if gradients else None
        for loads in load_sets:
            u = static_displacements(factor, loads, x)
            disp.append(u)
            if gradients:
                derivs.append(static_displacement_sensitivity(factor, dstiffness, loads, x, u))
        return self.functions(self.model, x, self.grid, matrices.stiffness, dstiffness,
                              disp, derivs)

    def static_nlp(self, load_sets):
        """Static sub-problem built on equivalent loads (one set per load case)."""
        values = _LastCall(lambda x: self.static_values(x, load_sets, True))

        def objective(x):
            v = values(x)
            return v.objective, v.objective_gradient

        def constraints(x):
            v = values(x)
            return v.constraints.values, v.constraints.jacobian

        return NlpProblem(self.lower, self.upper, objective, constraints)


# ---------------------------------------------------------------------------
# Benchmarks

def two_bar_problem(dt=0.2, t1=200.0, omega=np.pi / 2, amplitude=1.0):
    """Two bars sharing one DOF; windowed compliance under a volume limit."""
    model = two_bar_model()
    t_end = t1 + np.pi / omega
    grid = TimeGrid.from_horizon(dt, t_end, window=(t1, t_end))
    load = amplitude * np.sin(omega * grid.times)[None, :]
    return StructuralProblem(model, [0.1, 0.1], [1.0, 1.0], grid, [load],
                             CompliancePlusVolume(1.0), x0=[0.2, 0.2], name="p1")


def synthetic_ground_motion(dt=0.02, duration=20.0, peak=40.0):
    """Deterministic stand-in record [m/s^2] used when no measured record is given.

    A sum of five harmonics between 1.5 and 12 Hz under a
    ``t exp(1 - t/t_p)``-shaped envelope peaking at ``t_p = 3 s``, scaled
    to the requested peak absolute acceleration.
    """
    t = np.arange(int(round(duration / dt)) + 1) * dt
    envelope = (t / 3.0) * np.exp(1.0 - t / 3.0)
    freqs = (1.5, 3.1, 5.3, 7.9, 12.0)
    phases = (0.0, 1.1, 2.3, 0.7, 1.9)
    weights = (1.0, 0.8, 1.2, 0.9, 0.5)
    signal = sum(w * np.sin(2.0 * np.pi * f * t + p) for f, p, w in zip(freqs, phases, weights))
    record = envelope * signal
    return peak * record / np.abs(record).max()


def shear_frame_problem(record=None, dt=0.02, duration=20.0, max_drift=0.1):
    """Two-story shear frame under ground acceleration with drift limits."""
    model = shear_frame_model()
    grid = TimeGrid.from_horizon(dt, duration)
    if record is None:
        record = synthetic_ground_motion(dt, duration)
    mass = assemble(model, [0.5, 0.5]).mass
    loads = ground_motion_loads(mass, record, grid)
    return StructuralProblem(model, [0.001, 0.001], [0.5, 0.5], grid, [loads],
                             VolumePlusDrift(max_drift), x0=[0.5, 0.5], name="p2")


def roof_truss_problem(dt=0.02, t_end=50.0, window=(30.0, 50.0), max_stress=200e6):
    """13-bar roof truss under two wind load cases with stress and buckling limits."""
    model = roof_truss_model()
    grid = TimeGrid.from_horizon(dt, t_end, window=window)
    loads = truss_load_cases(model, grid)
    n = model.n_variables
    return StructuralProblem(model, np.full(n, 0.001), np.full(n, 0.5), grid, loads,
                             VolumePlusStress(max_stress), x0=np.full(n, 0.5), name="p3")


BENCHMARKS = {"p1": two_bar_problem, "p2": shear_frame_problem, "p3": roof_truss_problem}


__all__ = [
    "Analysis",
    "BENCHMARKS",
    "CompliancePlusVolume",
    "FunctionValues",
    "ResponseFunctions",
    "SensitivityHistory",
    "StructuralProblem",
    "VolumePlusDrift",
    "VolumePlusStress",
    "roof_truss_problem",
    "shear_frame_problem",
    "synthetic_ground_motion",
    "two_bar_problem",
]
