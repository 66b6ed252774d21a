"""Equilibria, decay, difference estimates, modal observables, dimension and regularity."""

from .equilibria import (
    EquilibriumNotFound,
    EquilibriumResult,
    MarginReport,
    default_guesses,
    find_equilibria,
    find_equilibrium,
    hyperbolicity_margin,
    residual_norm,
)
from .decay import DecayFit, NotSettled, decay_rate_fit, h_distance
from .quasi import GronwallFit, QuasiStabilityFit, difference_bound_fit, quasi_stability_fit
from .modes import DeterminingModesReport, completeness_defect, determining_modes_experiment, window_integral
from .regularity import RegularityProfile, acceleration_series, regularity_profile
from .attractor import AttractorSample, DimensionEstimate, attractor_sample, correlation_dimension, project_h

__all__ = [
    "EquilibriumNotFound", "EquilibriumResult", "MarginReport", "default_guesses", "find_equilibria",
    "find_equilibrium", "hyperbolicity_margin", "residual_norm", "DecayFit", "NotSettled", "decay_rate_fit",
    "h_distance", "GronwallFit", "QuasiStabilityFit", "difference_bound_fit", "quasi_stability_fit",
    "DeterminingModesReport", "completeness_defect", "determining_modes_experiment", "window_integral",
    "RegularityProfile", "acceleration_series", "regularity_profile", "AttractorSample", "DimensionEstimate",
    "attractor_sample", "correlation_dimension", "project_h",
]
