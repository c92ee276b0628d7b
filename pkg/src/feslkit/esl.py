"""Equivalent static loads (ESL) and their first-order extension (F-ESL).

At an anchor design ``x_W`` the transient displacements are converted into
static loads ``f_eq = K(x_W) u(x_W)``, one per time step of the evaluation
window. Plain ESL keeps those loads fixed while the static sub-problem is
optimized. F-ESL also carries the load gradient
``grad f_eq = dK/dx u + K du/dx`` and uses the linearized loads
``f_eq + grad f_eq (x - x_W)``, which makes the static sub-problem agree
with the dynamic one to first order at ``x_W``.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator

from ._validation import check_vector
from .nlp import CONVERGED, MAX_ITER, NlpSolution, kkt_report, solve

logger = logging.getLogger(__name__)

VARIANTS = ("esl", "fesl")


class InnerSolverError(RuntimeError):
    """The static sub-problem of an outer iteration failed."""

    def __init__(self, iteration, solution: NlpSolution):
        super().__init__(f"sub-problem of outer iteration {iteration} ended with status "
                         f"{solution.status!r} (max violation {solution.max_violation:.3e})")
        self.iteration = iteration
        self.solution = solution


@dataclass(frozen=True)
class EquivalentLoadSet:
    """Static loads for every window step of one load case.

    ``loads`` has shape ``(ndof, n_window)``; ``gradient`` has shape
    ``(ndof, n, n_window)`` for F-ESL and is ``None`` for plain ESL.
    """

    anchor: np.ndarray
    loads: np.ndarray
    gradient: np.ndarray = None

    @property
    def variant(self):
        return "esl" if self.gradient is None else "fesl"

    def at(self, x):
        """Loads at design ``x``: constant for ESL, linearized for F-ESL."""
        if self.gradient is None:
            return self.loads
        dx = np.asarray(x, dtype=float) - self.anchor
        return self.loads + np.einsum("jit,i->jt", self.gradient, dx)


def compute_equivalent_loads(stiffness, u, x_anchor, dstiffness=None, du=None):
    """Equivalent loads from windowed displacements at the anchor design.

    With ``dstiffness`` (stacked ``(n, ndof, ndof)``) and ``du``
    (``(ndof, n, n_window)``) the load gradient is included.
    """
    u = np.asarray(u, dtype=float)
    loads = stiffness @ u
    if (dstiffness is None) != (du is None):
        raise ValueError("the load gradient needs both dstiffness and du")
    gradient = None
    if du is not None:
        gradient = np.einsum("ijk,kt->jit", dstiffness, u) + np.einsum("jk,kit->jit", stiffness, du)
    return EquivalentLoadSet(np.array(x_anchor, dtype=float), loads, gradient)


def fesl_load_at(load_set, x, step=None):
    """Linearized loads at ``x``; a single window column if ``step`` is given."""
    f = load_set.at(x)
    return f if step is None else f[:, step]


def _factor(stiffness):
    if isinstance(stiffness, tuple):
        return stiffness
    try:
        return linalg.cho_factor(stiffness, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("static stiffness is not positive definite") from exc


def static_displacements(stiffness, load_set, x):
    """Solve ``K(x) u = F(x)`` for every window step.

    ``stiffness`` is ``K(x)`` or its Cholesky factorization from
    :func:`scipy.linalg.cho_factor`.
    """
    return linalg.cho_solve(_factor(stiffness), load_set.at(x), check_finite=False)


def static_displacement_sensitivity(stiffness, dstiffness, load_set, x, u=None):
    """Design derivatives of the static displacements, ``(ndof, n, n_window)``.

    Differentiating ``K u = F`` gives ``K du_i = dF_i - dK_i u`` with
    ``dF_i`` the load gradient (zero for plain ESL).
    """
    fac = _factor(stiffness)
    if u is None:
        u = static_displacements(fac, load_set, x)
    rhs = -np.einsum("ijk,kt->jit", dstiffness, u)
    if load_set.gradient is not None:
        rhs = rhs + load_set.gradient
    ndof, n, nt = rhs.shape
    return linalg.cho_solve(fac, rhs.reshape(ndof, n * nt), check_finite=False).reshape(ndof, n, nt)


@dataclass
class OuterIterationRecord:
    iteration: int
    anchor: np.ndarray
    objective: float
    max_constraint: float
    step_norm: float
    inner_status: str
    inner_iterations: int
    n_active: int
    multipliers: np.ndarray = None


@dataclass
class OuterLoopResult:
    x: np.ndarray
    fun: float
    multipliers: np.ndarray
    bound_lower: np.ndarray
    bound_upper: np.ndarray
    converged: bool
    n_outer: int
    n_tha: int
    history: list = field(default_factory=list)
    solution: NlpSolution = None


def _inner_options(constraint_tol, step_tol, optimality_tol, max_iter):
    return dict(constraint_tol=constraint_tol, step_tol=step_tol,
                optimality_tol=optimality_tol, max_iter=max_iter)


def run_outer_loop(problem, x0=None, variant="fesl", eps=1e-6, max_outer=50,
                   constraint_tol=1e-6, step_tol=1e-12, optimality_tol=1e-8, max_iter=200,
                   move_limit=None, strict=True):
    """Alternate transient analyses and static sub-problems until the design
    moves by at most ``eps`` (Euclidean norm) between outer iterations.

    ``move_limit`` (a fraction of each variable's range) optionally shrinks
    the sub-problem box around the anchor. With ``strict`` an inner solve
    that neither converges nor stops at its iteration limit raises
    :class:`InnerSolverError`.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    if move_limit is not None and not move_limit > 0.0:
        raise ValueError("move_limit must be positive")
    x = check_vector(problem.x0 if x0 is None else x0, "x0", problem.n)
    x = np.clip(x, problem.lower, problem.upper)
    opts = _inner_options(constraint_tol, step_tol, optimality_tol, max_iter)
    gradients = variant == "fesl"
    tha0 = problem.n_tha
    history = []
    sol = None
    converged = False
    for w in range(1, max_outer + 1):
        analysis = problem.analyze(x, sensitivities=gradients)
        grid = problem.grid
        disp = analysis.window_displacements(grid)
        dus = analysis.window_sensitivities(grid) if gradients else [None] * len(disp)
        load_sets = [
            compute_equivalent_loads(analysis.matrices.stiffness, u, x,
                                     analysis.dstiffness if gradients else None, du)
            for u, du in zip(disp, dus)
        ]
        dyn = problem.functions(problem.model, x, grid, analysis.matrices.stiffness,
                                analysis.dstiffness, disp, None)
        nlp = problem.static_nlp(load_sets)
        if move_limit is not None:
            span = move_limit * (problem.upper - problem.lower)
            nlp.lower = np.maximum(problem.lower, x - span)
            nlp.upper = np.minimum(problem.upper, x + span)
        sol = solve(nlp, x, **opts)
        if strict and sol.status not in (CONVERGED, MAX_ITER):
            raise InnerSolverError(w, sol)
        if sol.status == MAX_ITER:
            logger.warning("outer iteration %d: sub-problem hit its iteration limit", w)
        step = float(np.linalg.norm(sol.x - x))
        history.append(OuterIterationRecord(
            w, x.copy(), float(dyn.objective), dyn.constraints.max_value, step, sol.status,
            sol.n_iter, int(np.count_nonzero(sol.multipliers)), sol.multipliers))
        logger.info("outer %d: f=%.6g max g=%.3e step=%.3e", w, dyn.objective,
                    dyn.constraints.max_value, step)
        x = sol.x
        if step <= eps:
            converged = True
            break
    return OuterLoopResult(x=x, fun=sol.fun, multipliers=sol.multipliers,
                           bound_lower=sol.bound_lower, bound_upper=sol.bound_upper,
                           converged=converged, n_outer=len(history),
                           n_tha=problem.n_tha - tha0, history=history, solution=sol)


def run_direct_dynamic(problem, x0=None, constraint_tol=1e-6, step_tol=1e-12,
                       optimality_tol=1e-8, max_iter=200):
    """Solve the dynamic problem directly, one transient analysis per new design."""
    x = check_vector(problem.x0 if x0 is None else x0, "x0", problem.n)
    tha0 = problem.n_tha
    sol = solve(problem.dynamic_nlp(), x,
                **_inner_options(constraint_tol, step_tol, optimality_tol, max_iter))
    return OuterLoopResult(x=sol.x, fun=sol.fun, multipliers=sol.multipliers,
                           bound_lower=sol.bound_lower, bound_upper=sol.bound_upper,
                           converged=sol.converged, n_outer=sol.n_iter,
                           n_tha=problem.n_tha - tha0, history=[], solution=sol)


HISTORY_FIELDS = ("iteration", "objective", "max_constraint", "step_norm", "inner_status",
                  "inner_iterations", "n_active")


def write_history_csv(history, path):
    """One row per outer iteration, anchor design expanded to ``x1..xn``."""
    n = history[0].anchor.size if history else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(HISTORY_FIELDS) + [f"x{i + 1}" for i in range(n)])
        for rec in history:
            w.writerow([getattr(rec, k) for k in HISTORY_FIELDS]
                       + [repr(float(v)) for v in rec.anchor])


class _OptimizerBase(BaseEstimator):

    def kkt_report(self, problem):
        """KKT residuals of the dynamic problem at the fitted design.

        Runs one extra transient analysis that is not counted in ``n_tha_``.
        """
        tha = problem.n_tha
        report = kkt_report(problem.dynamic_nlp(), self.x_, self.multipliers_,
                            self.bound_lower_, self.bound_upper_)
        problem.n_tha = tha
        return report

    def _store(self, result):
        self.x_ = result.x
        self.fun_ = result.fun
        self.multipliers_ = result.multipliers
        self.bound_lower_ = result.bound_lower
        self.bound_upper_ = result.bound_upper
        self.converged_ = result.converged
        self.n_tha_ = result.n_tha
        self.n_outer_ = result.n_outer
        self.history_ = result.history
        self.solution_ = result.solution
        return self


class EquivalentStaticLoadOptimizer(_OptimizerBase):
    """Outer-loop optimizer using ESL (``variant="esl"``) or F-ESL loads."""

    def __init__(self, variant="fesl", eps=1e-6, max_outer=50, constraint_tol=1e-6,
                 step_tol=1e-12, optimality_tol=1e-8, max_iter=200, move_limit=None):
        self.variant = variant
        self.move_limit = move_limit
        self.eps = eps
        self.max_outer = max_outer
        self.constraint_tol = constraint_tol
        self.step_tol = step_tol
        self.optimality_tol = optimality_tol
        self.max_iter = max_iter

    def fit(self, problem, x0=None):
        return self._store(run_outer_loop(
            problem, x0, self.variant, self.eps, self.max_outer, self.constraint_tol,
            self.step_tol, self.optimality_tol, self.max_iter, self.move_limit))


class DirectDynamicOptimizer(_OptimizerBase):
    """Gradient-based optimization of the dynamic problem itself."""

    def __init__(self, constraint_tol=1e-6, step_tol=1e-12, optimality_tol=1e-8, max_iter=200):
        self.constraint_tol = constraint_tol
        self.step_tol = step_tol
        self.optimality_tol = optimality_tol
        self.max_iter = max_iter

    def fit(self, problem, x0=None):
        return self._store(run_direct_dynamic(
            problem, x0, self.constraint_tol, self.step_tol, self.optimality_tol,
            self.max_iter))


__all__ = [
    "DirectDynamicOptimizer",
    "EquivalentLoadSet",
    "EquivalentStaticLoadOptimizer",
    "InnerSolverError",
    "OuterIterationRecord",
    "OuterLoopResult",
    "compute_equivalent_loads",
    "fesl_load_at",
    "run_direct_dynamic",
    "run_outer_loop",
    "static_displacement_sensitivity",
    "static_displacements",
    "write_history_csv",
]
