"""Intersection cuts from concave underestimators of factorable functions."""

from .cutgen import Cut, RaySystem, intersection_cut, ray_step, step_length
from .errors import IntercutsError
from .estimators import EstimatorPair, estimate, estimate_text
from .expr import deriv_exact, evaluate, grad_fd, parse, to_text
from .lp import Instance, Tableau, map_cut_to_original, solve_lp, substitute_nonbasic
from .monoidal import MonoidalConfig, alpha_coeffs, beta, gamma_coeff, monoidal_cut, sweep_boundary
from .pipeline import PipelineOptions, RunReport, run_pipeline
from .plotdata import emit_plot_data
from .strengthen import Box, HhatEvaluator, build_hhat, hhat_eval, strengthened_cut
from .validate import Verdict, validate_cut

__version__ = "0.1.0"

__all__ = [
    "Box", "Cut", "EstimatorPair", "HhatEvaluator", "Instance", "IntercutsError", "MonoidalConfig",
    "PipelineOptions", "RaySystem", "RunReport", "Tableau", "Verdict", "alpha_coeffs", "beta", "build_hhat",
    "deriv_exact", "emit_plot_data", "estimate", "estimate_text", "evaluate", "gamma_coeff", "grad_fd",
    "hhat_eval", "intersection_cut", "map_cut_to_original", "monoidal_cut", "parse", "ray_step",
    "run_pipeline", "solve_lp", "step_length", "strengthened_cut", "substitute_nonbasic", "sweep_boundary",
    "to_text", "validate_cut",
]
