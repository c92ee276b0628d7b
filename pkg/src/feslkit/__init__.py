"""Dynamic response optimization with equivalent static loads (ESL) and
first-order equivalent static loads (F-ESL)."""

from .bench import BenchmarkSpec, RunReport, load_ground_motion, run_benchmark, verify
from .damping import rayleigh_coefficient_sensitivity, rayleigh_damping
from .esl import (DirectDynamicOptimizer, EquivalentLoadSet, EquivalentStaticLoadOptimizer,
                  compute_equivalent_loads, run_direct_dynamic, run_outer_loop,
                  static_displacement_sensitivity, static_displacements)
from .models import (DesignVector, LinkingMap, ModelDefinition, SystemMatrices, assemble,
                     assemble_sensitivity, roof_truss_model, shear_frame_model,
                     two_bar_model)
from .nlp import KktReport, NlpProblem, NlpSolution, kkt_report, solve
from .problems import (StructuralProblem, roof_truss_problem, shear_frame_problem,
                       synthetic_ground_motion, two_bar_problem)
from .sensitivity import direct_sensitivities, direct_sensitivity, fd_response_gradient
from .transient import NewmarkIntegrator, ResponseHistory, TimeGrid, newmark_solve

__version__ = "0.1.0"

__all__ = [
    "BenchmarkSpec",
    "DesignVector",
    "DirectDynamicOptimizer",
    "EquivalentLoadSet",
    "EquivalentStaticLoadOptimizer",
    "KktReport",
    "LinkingMap",
    "ModelDefinition",
    "NewmarkIntegrator",
    "NlpProblem",
    "NlpSolution",
    "ResponseHistory",
    "RunReport",
    "StructuralProblem",
    "SystemMatrices",
    "TimeGrid",
    "assemble",
    "assemble_sensitivity",
    "compute_equivalent_loads",
    "direct_sensitivities",
    "direct_sensitivity",
    "fd_response_gradient",
    "kkt_report",
    "load_ground_motion",
    "newmark_solve",
    "rayleigh_coefficient_sensitivity",
    "rayleigh_damping",
    "roof_truss_model",
    "roof_truss_problem",
    "run_benchmark",
    "run_direct_dynamic",
    "run_outer_loop",
    "shear_frame_model",
    "shear_frame_problem",
    "solve",
    "static_displacement_sensitivity",
    "static_displacements",
    "synthetic_ground_motion",
    "two_bar_model",
    "two_bar_problem",
    "verify",
]
