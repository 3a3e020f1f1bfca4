"""Convolution-quadrature finite element solver for the time-fractional
Oldroyd-B equation, with a Laplace-contour spectral oracle and a
convergence-study harness."""
from .core import ModelParams, ProblemCase, g_symbol, make_case
from .cq import Generator, be_weights, sbd_weights, weights
from .fem import assemble, system_for
from .mesh import build_uniform
from .oracle import modal_solution, reference_solution
from .report import ExperimentConfig, run_experiment, run_table
from .stepper import SchemeKind, be_solve, sbd_solve, solve

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "ProblemCase", "g_symbol", "make_case",
    "Generator", "be_weights", "sbd_weights", "weights",
    "assemble", "system_for", "build_uniform",
    "modal_solution", "reference_solution",
    "ExperimentConfig", "run_experiment", "run_table",
    "SchemeKind", "be_solve", "sbd_solve", "solve",
]
