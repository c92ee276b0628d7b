"""Benchmark runner: problem defaults, record ingestion, reports and checks."""

import csv
import dataclasses
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .esl import (DirectDynamicOptimizer, EquivalentStaticLoadOptimizer,
                  compute_equivalent_loads, static_displacement_sensitivity,
                  static_displacements, write_history_csv)
from .models import assemble, assemble_all_sensitivities
from .nlp import kkt_report, solve
from .problems import (roof_truss_problem, shear_frame_problem, synthetic_ground_motion,
                       two_bar_problem)
from .responses import DRIFT_MATRIX, axial_stress
from .sensitivity import fd_response_gradient, relative_l2_error

logger = logging.getLogger(__name__)

PROBLEMS = ("p1", "p2", "p3")
METHODS = ("direct", "esl", "fesl")

DEFAULTS = {
    "p1": {"eps": 1e-10, "constraint_tol": 1e-6},
    "p2": {"eps": 1e-6, "constraint_tol": 1e-5},
    "p3": {"eps": 1e-6, "constraint_tol": 1e-4},
}

RECORD_DT = 0.02
RECORD_DURATION = 20.0
PLAUSIBLE_PEAK = 100.0  # m/s^2


class RecordError(ValueError):
    pass


def load_ground_motion(path, dt=RECORD_DT, duration=RECORD_DURATION):
    """Read a two-column ``time, acceleration`` CSV [s, m/s^2].

    A non-numeric first line is treated as a header. The time step must be
    uniform and equal to ``dt``; records are never resampled. Samples past
    ``duration`` are dropped.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise RecordError(f"ground-motion record {path} is empty")
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    if not rows:
        raise RecordError(f"ground-motion record {path} has a header but no data")
    try:
        data = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise RecordError(f"{path}: non-numeric value ({exc})") from None
    if data.ndim != 2 or data.shape[1] != 2:
        raise RecordError(f"{path}: expected two columns (time, acceleration)")
    t, acc = data[:, 0], data[:, 1]
    if not np.all(np.isfinite(data)):
        raise RecordError(f"{path}: non-finite values")
    steps = np.diff(t)
    if steps.size == 0 or not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-9):
        raise RecordError(f"{path}: time step is not uniform")
    if not math.isclose(steps[0], dt, rel_tol=1e-6):
        raise RecordError(f"{path}: record dt={steps[0]:g} differs from the grid dt={dt:g}")
    needed = int(round(duration / dt)) + 1
    if acc.size < needed:
        raise RecordError(f"{path}: {acc.size} samples, at least {needed} needed")
    peak = float(np.abs(acc).max())
    if peak > PLAUSIBLE_PEAK:
        warnings.warn(f"{path}: peak acceleration {peak:g} exceeds {PLAUSIBLE_PEAK:g}; "
                      "check that the record is in m/s^2", stacklevel=2)
    return acc[:needed]


@dataclass
class BenchmarkSpec:
    problem: str
    method: str = "fesl"
    x0: tuple = None
    eps: float = None
    constraint_tol: float = None
    step_tol: float = 1e-12
    optimality_tol: float = 1e-8
    max_iter: int = 200
    max_outer: int = 50
    record: str = None
    out: str = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {PROBLEMS}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.record is not None and self.problem != "p2":
            raise ValueError("a ground-motion record only applies to p2")
        for key, value in DEFAULTS[self.problem].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        if self.x0 is not None:
            self.x0 = tuple(float(v) for v in self.x0)
        if not self.eps > 0.0:
            raise ValueError("eps must be positive")

    def build_problem(self):
        if self.problem == "p1":
            return two_bar_problem()
        if self.problem == "p2":
            record = None if self.record is None else load_ground_motion(self.record)
            return shear_frame_problem(record)
        return roof_truss_problem()

    def optimizer(self):
        opts = dict(constraint_tol=self.constraint_tol, step_tol=self.step_tol,
                    optimality_tol=self.optimality_tol, max_iter=self.max_iter)
        if self.method == "direct":
            return DirectDynamicOptimizer(**opts)
        return EquivalentStaticLoadOptimizer(self.method, self.eps, self.max_outer, **opts)


_FIELD_TYPES = {"problem": str, "method": str, "eps": float, "constraint_tol": float,
                "step_tol": float, "optimality_tol": float, "max_iter": int,
                "max_outer": int, "record": str, "out": str}


def parse_x0(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key == "x0":
                values[key] = parse_x0(value)
            elif key in _FIELD_TYPES:
                values[key] = _FIELD_TYPES[key](value)
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return values


@dataclass
class RunReport:
    problem: str
    method: str
    x: list
    objective: float
    max_constraint: float
    n_tha: int
    n_outer: int
    n_transient_solves: int
    converged: bool
    status: str
    kkt: dict
    history: list
    wall_time: float
    record: str
    settings: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())


def _write_csv(path, header, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])


def sensitivity_curves(problem, x, anchor=None):
    """Window curves of the dynamic displacement derivative and of its
    static ESL and F-ESL counterparts anchored at ``anchor`` (default ``x``).

    Returns ``(times, dynamic, esl, fesl, grad_feq)``; the sensitivity
    arrays are ``(ndof, n, n_window)`` for the first load case.
    """
    anchor = np.asarray(x if anchor is None else anchor, dtype=float)
    x = np.asarray(x, dtype=float)
    grid = problem.grid
    a = problem.analyze(anchor, sensitivities=True)
    u = a.window_displacements(grid)[0]
    du = a.window_sensitivities(grid)[0]
    k = a.matrices.stiffness
    sets = {"esl": compute_equivalent_loads(k, u, anchor),
            "fesl": compute_equivalent_loads(k, u, anchor, a.dstiffness, du)}
    kx = assemble(problem.model, x).stiffness
    _, _, dkx = assemble_all_sensitivities(problem.model, x)
    static = {name: static_displacement_sensitivity(kx, dkx, s, x) for name, s in sets.items()}
    dyn = problem.analyze(x, sensitivities=True).window_sensitivities(grid)[0]
    return grid.times[grid.window], dyn, static["esl"], static["fesl"], sets["fesl"].gradient


def first_order_gap(reference, approx):
    """Largest deviation per variable, scaled by that variable's peak reference value."""
    peak = np.abs(reference).max(axis=(0, 2))
    peak = np.where(peak > 0.0, peak, 1.0)
    return float((np.abs(approx - reference).max(axis=(0, 2)) / peak).max())


def _write_outputs(spec, problem, est, report):
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    if est.history_:
        write_history_csv(est.history_, out / "history.csv")
    x = est.x_
    grid = problem.grid
    if spec.problem == "p1":
        times, dyn, esl, fesl, gfeq = sensitivity_curves(problem, x)
        n = dyn.shape[1]
        header = ["t"] + [f"{kind}_du_dx{i + 1}" for kind in ("dynamic", "esl", "fesl")
                          for i in range(n)]
        cols = [times] + [arr[0, i] for arr in (dyn, esl, fesl) for i in range(n)]
        _write_csv(out / "sensitivity.csv", header, cols)
        _write_csv(out / "feq_gradient.csv", ["t"] + [f"dfeq_dx{i + 1}" for i in range(n)],
                   [times] + [gfeq[0, i] for i in range(n)])
    elif spec.problem == "p2":
        u = problem.analyze(x, sensitivities=False).responses[0].u
        d = DRIFT_MATRIX @ u
        _write_csv(out / "drift.csv", ["t", "drift_1", "drift_2"], [grid.times, d[0], d[1]])
    else:
        a = problem.analyze(x, sensitivities=False)
        header = ["t"] + [f"case{c + 1}_bar{b + 1}" for c in range(problem.n_cases)
                          for b in range(problem.model.n_elements)]
        cols = [grid.times[grid.window]]
        for u in a.window_displacements(grid):
            sigma, _ = axial_stress(problem.model, u)
            cols.extend(sigma)
        _write_csv(out / "stress.csv", header, cols)


def run_benchmark(spec: BenchmarkSpec, write=True):
    """Optimize one benchmark and return its :class:`RunReport`.

    The KKT report uses dynamic-problem gradients at the final design; the
    extra transient analysis it needs is not counted in ``n_tha``.
    """
    problem = spec.build_problem()
    record = "n/a"
    if spec.problem == "p2":
        record = spec.record if spec.record is not None else "synthetic (non-paper record)"
    est = spec.optimizer()
    start = time.perf_counter()
    est.fit(problem, spec.x0)
    wall = time.perf_counter() - start
    solves = problem.n_transient_solves
    kkt = est.kkt_report(problem)
    values = problem.dynamic_values(est.x_, gradients=False)
    status = est.solution_.status
    if not est.converged_ and status == "converged":
        status = "max_outer"  # every sub-problem converged but the anchors kept moving
    report = RunReport(
        problem=spec.problem, method=spec.method, x=[float(v) for v in est.x_],
        objective=float(values.objective), max_constraint=values.constraints.max_value,
        n_tha=int(est.n_tha_), n_outer=int(est.n_outer_), n_transient_solves=int(solves),
        converged=bool(est.converged_), status=status,
        kkt={"stationarity_norm": kkt.stationarity_norm, "max_violation": kkt.max_violation,
             "min_multiplier": kkt.min_multiplier,
             "complementarity_norm": kkt.complementarity_norm,
             "lagrangian_gradient": [float(v) for v in kkt.lagrangian_gradient],
             "objective_gradient": [float(v) for v in kkt.objective_gradient]},
        history=[{"iteration": h.iteration, "anchor": [float(v) for v in h.anchor],
                  "objective": float(h.objective), "max_constraint": float(h.max_constraint),
                  "step_norm": h.step_norm, "inner_status": h.inner_status,
                  "inner_iterations": h.inner_iterations} for h in est.history_],
        wall_time=wall, record=record,
        settings={k: list(v) if isinstance(v, tuple) else v
                  for k, v in dataclasses.asdict(spec).items() if k != "out"},
    )
    if write and spec.out is not None:
        _write_outputs(spec, problem, est, report)
    return report


# ---------------------------------------------------------------------------
# verify

@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def _check_fd(problem_id):
    problem = {"p1": two_bar_problem, "p2": shear_frame_problem,
               "p3": roof_truss_problem}[problem_id]()
    x = problem.x0
    a = problem.analyze(x)
    worst = 0.0
    for case in range(problem.n_cases):
        for i in range(problem.n):
            # the models stay valid just outside the box, so keep the central stencil
            fd = fd_response_gradient(lambda z: problem.simulate(z, case), x, i)
            worst = max(worst, relative_l2_error(a.sensitivities[case].du[:, i], fd.du))
    return CheckResult(f"{problem_id}: direct sensitivity vs central FD", worst < 1e-5,
                       worst, 1e-5)


def _check_anchor(problem_id):
    problem = {"p1": two_bar_problem, "p2": shear_frame_problem,
               "p3": roof_truss_problem}[problem_id]()
    x = problem.x0
    a = problem.analyze(x)
    worst = 0.0
    for u, du in zip(a.window_displacements(problem.grid), a.window_sensitivities(problem.grid)):
        s = compute_equivalent_loads(a.matrices.stiffness, u, x, a.dstiffness, du)
        ut = static_displacements(a.matrices.stiffness, s, x)
        worst = max(worst, float(np.abs(ut - u).max() / max(np.abs(u).max(), 1e-300)))
    return CheckResult(f"{problem_id}: F-ESL anchor identity", worst < 1e-8, worst, 1e-8)


def _check_esl_gap():
    problem = two_bar_problem()
    _, dyn, esl, _, _ = sensitivity_curves(problem, [0.1, 0.6])
    gap = first_order_gap(dyn, esl)
    return CheckResult("p1: ESL sensitivity differs from dynamic at (0.1, 0.6)", gap > 1e-2,
                       gap, 1e-2, "expected nonzero gap")


def _check_counts(problem_id):
    problem = shear_frame_problem() if problem_id == "p2" else roof_truss_problem()
    expected = 2002 if problem_id == "p2" else 52052
    m = len(problem.dynamic_values(problem.x0, gradients=False).constraints)
    return CheckResult(f"{problem_id}: constraint count", m == expected, float(m),
                       float(expected))


def _check_kkt_p1():
    problem = two_bar_problem()
    sol = solve(problem.dynamic_nlp(), problem.x0)
    rep = kkt_report(problem.dynamic_nlp(), sol.x, sol.multipliers, sol.bound_lower,
                     sol.bound_upper)
    return CheckResult("p1: KKT stationarity of the direct solution",
                       rep.stationarity_norm < 1e-6, rep.stationarity_norm, 1e-6)


def verify_checks(problems=PROBLEMS):
    checks = []
    for p in problems:
        checks.append(lambda p=p: _check_fd(p))
        checks.append(lambda p=p: _check_anchor(p))
        if p in ("p2", "p3"):
            checks.append(lambda p=p: _check_counts(p))
    if "p1" in problems:
        checks += [_check_esl_gap, _check_kkt_p1]
    return checks


def thread_limit(default=None):
    """Worker cap from ``FESLKIT_THREADS`` (positive integer)."""
    raw = os.environ.get("FESLKIT_THREADS")
    if raw is None or raw.strip() == "":
        return default or min(4, os.cpu_count() or 1)
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"FESLKIT_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"FESLKIT_THREADS must be a positive integer, got {raw!r}")
    return value


def verify(problems=PROBLEMS, workers=None):
    """Run the invariant checks concurrently; results keep submission order."""
    workers = thread_limit() if workers is None else workers
    checks = verify_checks(problems)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(c) for c in checks]
        results = []
        for fut, check in zip(futures, checks):
            try:
                results.append(fut.result())
            except Exception as exc:  # a crashing check is a failed check
                results.append(CheckResult(getattr(check, "__name__", "check"), False,
                                           math.nan, math.nan, f"error: {exc}"))
    return results


__all__ = [
    "BenchmarkSpec",
    "CheckResult",
    "DEFAULTS",
    "RecordError",
    "RunReport",
    "first_order_gap",
    "load_ground_motion",
    "read_config",
    "run_benchmark",
    "sensitivity_curves",
    "synthetic_ground_motion",
    "thread_limit",
    "verify",
]
