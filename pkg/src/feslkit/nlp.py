"""Dense SQP solver for smooth problems with many inequality constraints,
and a KKT residual checker.

Each quadratic sub-problem is turned into a least-distance program and
solved with the Lawson-Hanson NNLS algorithm. Its least-squares systems have
``n + 1`` rows no matter how many constraints there are, so problems with a
handful of variables and tens of thousands of constraints stay cheap and
degenerate (nearly parallel) constraint rows do no harm.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from ._validation import check_vector

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"
LINE_SEARCH_FAILURE = "line_search_failure"


@dataclass
class NlpProblem:
    """``min f(x)`` s.t. ``c(x) <= 0`` and ``lower <= x <= upper``.

    ``objective(x)`` returns ``(f, grad)``; ``constraints(x)`` returns
    ``(c, jacobian)`` with the Jacobian of shape ``(m, n)``. Both must be
    deterministic. ``constraints`` may be ``None`` for bound-only problems.
    """

    lower: np.ndarray
    upper: np.ndarray
    objective: Callable
    constraints: Callable = None

    def __post_init__(self):
        self.lower = check_vector(self.lower, "lower")
        self.upper = check_vector(self.upper, "upper", self.lower.size)
        if np.any(self.upper < self.lower):
            raise ValueError("upper bounds below lower bounds")

    @property
    def n(self):
        return self.lower.size

    def evaluate(self, x):
        f, g = self.objective(x)
        if self.constraints is None:
            c, jac = np.zeros(0), np.zeros((0, self.n))
        else:
            c, jac = self.constraints(x)
        return float(f), np.asarray(g, float), np.asarray(c, float), np.asarray(jac, float)


@dataclass
class NlpSolution:
    x: np.ndarray
    fun: float
    multipliers: np.ndarray
    bound_lower: np.ndarray
    bound_upper: np.ndarray
    status: str
    n_iter: int
    n_evaluations: int
    max_violation: float
    stationarity: float
    x0_clipped: bool = False
    log: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == CONVERGED


@dataclass(frozen=True)
class KktReport:
    stationarity_norm: float
    max_violation: float
    min_multiplier: float
    complementarity_norm: float
    lagrangian_gradient: np.ndarray
    objective_gradient: np.ndarray


class QPInfeasibleError(RuntimeError):
    pass


class QPCyclingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# QP

def _nnls(C, e, max_iter):
    """Lawson-Hanson ``min |C u - e|`` subject to ``u >= 0``.

    ``C`` is short and wide; the passive-set least-squares problems stay of
    size ``C.shape[0]``.
    """
    m = C.shape[1]
    u = np.zeros(m)
    passive = np.zeros(m, dtype=bool)
    resid = e.copy()
    tol = 1e-12 * max(1.0, np.abs(C).max(initial=0.0)) * max(C.shape)
    it = 0
    while True:
        w = C.T @ resid
        w[passive] = -np.inf
        j = int(np.argmax(w))
        if w[j] <= tol:
            break
        passive[j] = True
        while True:
            it += 1
            if it > max_iter:
                raise QPCyclingError("NNLS iteration limit reached")
            idx = np.flatnonzero(passive)
            s = np.zeros(m)
            s[idx] = np.linalg.lstsq(C[:, idx], e, rcond=None)[0]
            if np.all(s[idx] > 0.0):
                u = s
                break
            neg = idx[s[idx] <= 0.0]
            alpha = np.min(u[neg] / (u[neg] - s[neg]))
            u = u + alpha * (s - u)
            drop = idx[u[idx] <= tol]
            passive[drop] = False
            u[drop] = 0.0
            if not passive.any():
                break
        resid = e - C @ u
    return u, resid


def solve_qp(hessian, linear, a_ub, b_ub, max_iter=None):
    """Solve ``min 1/2 d'Gd + a'd`` s.t. ``A d <= b`` for positive definite ``G``.

    The problem is mapped to a least-distance program and solved through
    the Lawson-Hanson NNLS dual. Returns ``(d, multipliers)`` with
    non-negative multipliers satisfying ``G d + a + A' lam = 0``. Raises
    :class:`QPInfeasibleError` when the constraints are inconsistent.
    """
    G = np.asarray(hessian, float)
    a = np.asarray(linear, float)
    n = a.size
    A = np.asarray(a_ub, float).reshape(-1, n)
    b = np.asarray(b_ub, float).ravel()
    m = b.size
    try:
        L = linalg.cholesky(G, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise ValueError("QP Hessian is not positive definite") from exc
    q = linalg.solve_triangular(L, a, lower=True, check_finite=False)
    if m == 0:
        return -linalg.solve_triangular(L.T, q, lower=False, check_finite=False), np.zeros(0)
    # divide the objective by s so the least-distance solution stays O(1);
    # d is unchanged and the multipliers are scaled back at the end
    s = max(1.0, float(q @ q))
    L = L / np.sqrt(s)
    q = q / np.sqrt(s)
    # z = L'd + q;  A d <= b  <=>  E z >= f
    E = -linalg.solve_triangular(L, A.T, lower=True, check_finite=False).T
    f = -b + E @ q
    norms = np.linalg.norm(E, axis=1)
    scale = np.where(norms > 0.0, norms, 1.0)
    if np.any((norms == 0.0) & (f > 0.0)):
        raise QPInfeasibleError("QP has an empty row with a positive right-hand side")
    En, fn = E / scale[:, None], f / scale
    C = np.vstack([En.T, fn[None, :]])
    e = np.zeros(n + 1)
    e[-1] = 1.0
    if max_iter is None:
        max_iter = 30 * (n + 1) + 100
    u, resid = _nnls(C, e, max_iter)
    denom = 1.0 - float(fn @ u)
    if denom <= 1e-12 * max(1.0, np.abs(u).sum()):
        raise QPInfeasibleError("QP constraints are inconsistent")
    mu = u / denom
    z = En.T @ mu
    d = linalg.solve_triangular(L.T, z - q, lower=False, check_finite=False)
    return d, s * mu / scale


def _screen_rows(jac, c, lo, hi):
    """Rows that can become active somewhere in the box ``lo <= d <= hi``."""
    reach = c + np.maximum(jac * lo, jac * hi).sum(axis=1)
    return np.flatnonzero(reach >= -1e-12 * (1.0 + np.abs(c)))


def _solve_qp_step(B, g, jac, c, lo, hi, elastic_weight):
    """QP step with bounds ``lo <= d <= hi``; falls back to an elastic QP.

    Returns ``(d, lam, mu_lower, mu_upper, elastic)``.
    """
    n = g.size
    m = c.size
    keep = _screen_rows(jac, c, lo, hi)
    jk, ck = jac[keep], c[keep]
    mk = keep.size
    eye = np.eye(n)
    lam = np.zeros(m)
    A = np.vstack([jk, eye, -eye])
    bvec = np.concatenate([-ck, hi, -lo])
    try:
        d, mult = solve_qp(B, g, A, bvec)
        lam[keep] = mult[:mk]
        return d, lam, mult[mk + n:], mult[mk:mk + n], False
    except QPInfeasibleError:
        pass
    # elastic mode: one slack t >= 0 relaxes every linearized constraint
    Be = np.zeros((n + 1, n + 1))
    Be[:n, :n] = B
    Be[n, n] = max(1.0, np.trace(B) / n)
    ge = np.append(g, elastic_weight)
    Ae = np.zeros((mk + 2 * n + 1, n + 1))
    Ae[:mk, :n] = jk
    Ae[:mk, n] = -1.0
    Ae[mk:mk + n, :n] = eye
    Ae[mk + n:mk + 2 * n, :n] = -eye
    Ae[-1, n] = -1.0
    be = np.concatenate([-ck, hi, -lo, [0.0]])
    de, mult = solve_qp(Be, ge, Ae, be)
    lam[keep] = mult[:mk]
    return de[:n], lam, mult[mk + n:mk + 2 * n], mult[mk:mk + n], True


# ---------------------------------------------------------------------------
# SQP

def _violation(c, x, lower, upper):
    v = max(0.0, float(c.max(initial=0.0)))
    return max(v, float(np.max(lower - x, initial=0.0)), float(np.max(x - upper, initial=0.0)))


def solve(problem: NlpProblem, x0, constraint_tol=1e-6, step_tol=1e-12, optimality_tol=1e-8,
          max_iter=200, callback=None):
    """Minimize ``problem`` from ``x0`` with a damped-BFGS SQP method.

    Convergence is declared when the maximum constraint violation is at most
    ``constraint_tol`` and either the QP step is below ``step_tol`` (relative
    to ``1 + |x|``) or the Lagrangian gradient is below ``optimality_tol``
    (relative to ``1 + |grad f|``). The returned multipliers come from the
    last QP sub-problem.
    """
    lower, upper = problem.lower, problem.upper
    x0 = check_vector(x0, "x0", problem.n)
    x = np.clip(x0, lower, upper)
    clipped = bool(np.any(np.abs(x - x0) > 1e-12 * (1.0 + np.abs(x0))))
    if clipped:
        logger.warning("x0 outside the bounds; clipped")
    f, g, c, jac = problem.evaluate(x)
    n_eval = 1
    # upper limit on infeasibility, as in filter methods: keeps the line
    # search out of regions where the linearizations are meaningless
    theta_max = max(1.0, 1.25 * _violation(c, x, lower, upper))
    B = np.eye(problem.n)
    first_update = True
    nu = 0.0
    log = []
    status = MAX_ITER
    lam = np.zeros(c.size)
    mu_l = np.zeros(problem.n)
    mu_u = np.zeros(problem.n)
    stationarity = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        elastic_weight = max(1e3, 100.0 * nu) * max(1.0, np.abs(g).max(initial=0.0))
        d, lam, mu_l, mu_u, elastic = _solve_qp_step(
            B, g, jac, c, lower - x, upper - x, elastic_weight)
        viol = _violation(c, x, lower, upper)
        grad_lag = g + jac.T @ lam - mu_l + mu_u
        stationarity = float(np.abs(grad_lag).max(initial=0.0))
        step = float(np.abs(d).max(initial=0.0))
        row = {"iter": it, "f": f, "max_violation": viol, "step": step,
               "stationarity": stationarity, "n_active": int(np.count_nonzero(lam)),
               "elastic": elastic}
        if viol <= constraint_tol and not elastic and (
                step <= step_tol * (1.0 + np.abs(x).max())
                or stationarity <= optimality_tol * (1.0 + np.abs(g).max(initial=0.0))):
            status = CONVERGED
            row.update(alpha=0.0, merit=f + nu * np.sum(np.maximum(c, 0.0)))
            log.append(row)
            break

        nu = max(nu, 1.01 * float(lam.max(initial=0.0)) + 1e-10,
                 0.5 * (nu + float(lam.max(initial=0.0))))
        merit0 = f + nu * np.sum(np.maximum(c, 0.0))
        slope = g @ d - nu * np.sum(np.maximum(c, 0.0))
        if slope >= 0.0:
            slope = -abs(g @ d) - 1e-16

        alpha = 1.0
        accepted = False
        x_new = np.clip(x + d, lower, upper)
        f_new, g_new, c_new, jac_new = problem.evaluate(x_new)
        n_eval += 1
        merit = f_new + nu * np.sum(np.maximum(c_new, 0.0))
        if merit <= merit0 + 1e-4 * slope and _violation(c_new, x_new, lower, upper) <= theta_max:
            accepted = True
        elif c.size:
            # second-order correction against the Maratos effect
            try:
                dc, *_ = _solve_qp_step(B, g, jac, c_new - jac @ d, lower - x, upper - x,
                                        elastic_weight)
                x_soc = np.clip(x + dc, lower, upper)
                f_s, g_s, c_s, jac_s = problem.evaluate(x_soc)
                n_eval += 1
                merit_s = f_s + nu * np.sum(np.maximum(c_s, 0.0))
                if (merit_s <= merit0 + 1e-4 * slope
                        and _violation(c_s, x_soc, lower, upper) <= theta_max):
                    accepted = True
                    x_new, f_new, g_new, c_new, jac_new, merit = x_soc, f_s, g_s, c_s, jac_s, merit_s
            except (QPInfeasibleError, QPCyclingError):
                pass
        while not accepted:
            alpha *= 0.5
            if alpha < 1e-10:
                break
            x_new = np.clip(x + alpha * d, lower, upper)
            f_new, g_new, c_new, jac_new = problem.evaluate(x_new)
            n_eval += 1
            merit = f_new + nu * np.sum(np.maximum(c_new, 0.0))
            accepted = (merit <= merit0 + 1e-4 * alpha * slope
                        and _violation(c_new, x_new, lower, upper) <= theta_max)
        row.update(alpha=alpha if accepted else 0.0, merit=merit0)
        log.append(row)
        if callback is not None:
            callback(row)
        if not accepted:
            if viol <= constraint_tol and stationarity <= 1e3 * optimality_tol * (
                    1.0 + np.abs(g).max(initial=0.0)):
                status = CONVERGED
            else:
                status = LINE_SEARCH_FAILURE
            break

        s = x_new - x
        y = (g_new + jac_new.T @ lam) - (g + jac.T @ lam)
        sy = float(s @ y)
        if first_update and sy > 0.0:
            B = (float(y @ y) / sy) * np.eye(problem.n)
            first_update = False
        Bs = B @ s
        sBs = float(s @ Bs)
        if sBs > 0.0:
            if sy < 0.2 * sBs:
                theta = 0.8 * sBs / (sBs - sy)
                y = theta * y + (1.0 - theta) * Bs
                sy = float(s @ y)
            B = B + np.outer(y, y) / sy - np.outer(Bs, Bs) / sBs
            B = 0.5 * (B + B.T)
        x, f, g, c, jac = x_new, f_new, g_new, c_new, jac_new
    else:
        it = max_iter

    viol = _violation(c, x, lower, upper)
    if status == CONVERGED and viol > constraint_tol:
        status = INFEASIBLE
    if status == MAX_ITER and viol > constraint_tol:
        status = INFEASIBLE if elastic else MAX_ITER
    return NlpSolution(x=x, fun=f, multipliers=lam, bound_lower=mu_l, bound_upper=mu_u,
                       status=status, n_iter=it, n_evaluations=n_eval, max_violation=viol,
                       stationarity=stationarity, x0_clipped=clipped, log=log)


def kkt_report(problem: NlpProblem, x, multipliers, bound_lower=None, bound_upper=None):
    """First-order optimality residuals of ``problem`` at ``(x, multipliers)``.

    Bound multipliers default to zero. Stationarity is the infinity norm of
    ``grad f + J' lam - mu_lower + mu_upper``.
    """
    x = check_vector(x, "x", problem.n)
    _, g, c, jac = problem.evaluate(x)
    lam = check_vector(multipliers, "multipliers", c.size) if c.size else np.zeros(0)
    mu_l = np.zeros(problem.n) if bound_lower is None else check_vector(bound_lower, "bound_lower", problem.n)
    mu_u = np.zeros(problem.n) if bound_upper is None else check_vector(bound_upper, "bound_upper", problem.n)
    grad_lag = g + jac.T @ lam - mu_l + mu_u
    gaps = np.concatenate([c, problem.lower - x, x - problem.upper])
    comp = np.concatenate([lam * c, mu_l * (problem.lower - x), mu_u * (x - problem.upper)])
    all_mult = np.concatenate([lam, mu_l, mu_u])
    return KktReport(
        stationarity_norm=float(np.abs(grad_lag).max(initial=0.0)),
        max_violation=max(0.0, float(gaps.max(initial=0.0))),
        min_multiplier=float(all_mult.min()) if all_mult.size else 0.0,
        complementarity_norm=float(np.abs(comp).max(initial=0.0)),
        lagrangian_gradient=grad_lag,
        objective_gradient=g,
    )
