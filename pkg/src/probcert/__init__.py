"""Probabilistic output certificates for ReLU networks via quadratic constraints and SDP."""

from .ellipsoid import Ellipsoid, Model, confidence_ellipsoid
from .ip_solver import SolverConfig, Solution, Status, solve_feasibility, solve_maxdet
from .network import Layer, Network, gen_random_network, load_network
from .verify import (
    Certificate,
    VerifyOptions,
    monte_carlo_coverage,
    propagate_confidence,
    verify_halfspace,
    verify_polytope,
)

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "Ellipsoid",
    "Layer",
    "Model",
    "Network",
    "Solution",
    "SolverConfig",
    "Status",
    "VerifyOptions",
    "confidence_ellipsoid",
    "gen_random_network",
    "load_network",
    "monte_carlo_coverage",
    "propagate_confidence",
    "solve_feasibility",
    "solve_maxdet",
    "verify_halfspace",
    "verify_polytope",
]
