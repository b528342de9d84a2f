"""Post-fit diagnostics: posterior draws, predictive likelihood, KL quadrature, gradient variance."""
from .divergence import KLResult, kl_q_to_density, transformation_study
from .posterior import (
    PosteriorSampleSet,
    draw_posterior,
    empirical_covariance,
    marginal_variance_ratio,
    predictive_log_likelihood,
    retained_dimensions,
)
from .reference import MetropolisResult, random_walk_metropolis
from .variance import VarianceReport, gradient_variance_study

__all__ = [
    "KLResult",
    "MetropolisResult",
    "PosteriorSampleSet",
    "VarianceReport",
    "draw_posterior",
    "empirical_covariance",
    "gradient_variance_study",
    "kl_q_to_density",
    "marginal_variance_ratio",
    "predictive_log_likelihood",
    "random_walk_metropolis",
    "retained_dimensions",
    "transformation_study",
]
