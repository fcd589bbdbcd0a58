"""Counting returns to a target set before a hazard set is hit.

Exact laws for Markov window chains, seeded simulation, the finite-size
geometric approximation bound, metric-ball and tower experiments.
"""
__version__ = "0.1.0"

from .core import Convention, CylinderUnion, HitStats, kappa, pi_cross, pi_self, shift_set, tau_and_sigma
from .geolaw import Pmf, TVInterval, geo_pmf, hazard_bound, optimize_bound, tv_distance
from .measures import FiniteMarkovModel, GaussDigitModel, IIDModel, cylinder_measure, set_measure
from .montecarlo import cylinder_pair_experiment, simulate_sigma
from .oracle import build_window_chain, exact_sigma_distribution, exact_sigma_dp

__all__ = [
    "Convention", "CylinderUnion", "HitStats", "kappa", "pi_cross", "pi_self", "shift_set",
    "tau_and_sigma", "Pmf", "TVInterval", "geo_pmf", "hazard_bound", "optimize_bound",
    "tv_distance", "FiniteMarkovModel", "GaussDigitModel", "IIDModel", "cylinder_measure",
    "set_measure", "cylinder_pair_experiment", "simulate_sigma", "build_window_chain",
    "exact_sigma_distribution", "exact_sigma_dp",
]
