"""Replicated gradient estimates at a fixed variational point."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.optimizer import FitConfig, fit
from ..core.transforms import TransformSet
from ..core.variational import MeanFieldParams, advi_gradient, bbvi_gradient, init_params
from ..models import registry
from ..models.base import BoundModel
from ..utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

FIXTURES = ("gamma_10_10", "tanh_regression")
ESTIMATORS = ("advi", "bbvi")
REFERENCE_ITERS = 100
REFERENCE_ETA = 0.1


@dataclass
class VarianceReport:
    """Per-coordinate spread of R single gradient estimates of d ELBO / d mu."""

    estimator: str
    grad_samples: int
    variances: np.ndarray
    means: np.ndarray
    replications: int
    fixture: str = ""

    def __post_init__(self) -> None:
        if np.any(self.variances < 0.0):
            raise ValueError("variances must be non-negative")

    @property
    def mean_variance(self) -> float:
        return float(np.mean(self.variances))

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(self.variances / self.replications)


def build_fixture(name: str, seed: int = 0) -> BoundModel:
    """The model and data a variance study runs on."""
    if name == "gamma_10_10":
        model = registry.build("gamma_target", shape=10.0, rate=10.0, normalized=False)
        return model.bind(model.validate({}))
    if name == "tanh_regression":
        model = registry.build("tanh_regression")
        raw = model.simulate_data(np.random.default_rng([seed, 4]), n=100, d=10)
        return model.bind(model.validate(raw))
    raise ValueError(f"unknown variance fixture '{name}', expected one of {FIXTURES}")


def reference_point(bound: BoundModel, seed: int = 0,
                    iterations: int = REFERENCE_ITERS) -> Tuple[MeanFieldParams, TransformSet]:
    """Mean-field parameters after a short fixed-seed fit starting from the prior-scale init."""
    config = FitConfig(family="meanfield", max_iters=iterations, eta_scale=REFERENCE_ETA, seed=seed,
                       tol_rel=1e-12, log_every=0)
    result = fit(bound.definition, bound.data, config)
    params = result.params
    if not params.is_finite():
        logger.warning("Reference fit diverged; using the zero initialization")
        params = init_params("meanfield", result.transforms.dim)
    return params, result.transforms


def _replicate(estimator: str, bound: BoundModel, transforms: TransformSet, params: MeanFieldParams,
               grad_samples: int, replications: int, rng: np.random.Generator) -> np.ndarray:
    grads = np.empty((replications, params.dim))
    for r in range(replications):
        eta = rng.standard_normal((grad_samples, params.dim))
        if estimator == "advi":
            estimate = advi_gradient(bound, transforms, params, eta, rng=rng)
        else:
            zeta = params.mu + params.sigma * eta
            estimate = bbvi_gradient(bound, transforms, params, zeta, rng=rng)
        grads[r] = estimate.grad_mu
    return grads


def gradient_variance_study(fixture: str = "gamma_10_10", estimators: Sequence[str] = ESTIMATORS,
                            grad_samples: Sequence[int] = (1, 10, 100), replications: int = 10_000,
                            seed: int = 0,
                            reference: Optional[Tuple[MeanFieldParams, TransformSet]] = None
                            ) -> List[VarianceReport]:
    """Variance of the ADVI and score-function estimators of d ELBO / d mu for each M.

    Every (estimator, M) pair draws its noise from its own generator seeded by
    ``(seed, estimator index, M)``, so reports are reproducible one by one.
    """
    bound = build_fixture(fixture, seed)
    params, transforms = reference if reference is not None else reference_point(bound, seed)
    reports: List[VarianceReport] = []
    for e_idx, estimator in enumerate(estimators):
        if estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator '{estimator}', expected one of {ESTIMATORS}")
        for m in grad_samples:
            rng = np.random.default_rng([seed, e_idx, int(m)])
            grads = _replicate(estimator, bound, transforms, params, int(m), replications, rng)
            report = VarianceReport(
                estimator=estimator,
                grad_samples=int(m),
                variances=grads.var(axis=0, ddof=1),
                means=grads.mean(axis=0),
                replications=replications,
                fixture=fixture,
            )
            logger.info(f"{fixture} {estimator} M={m}: mean variance {report.mean_variance:.4e}",
                        extra={"fixture": fixture, "estimator": estimator, "grad_samples": int(m),
                               "variance": report.mean_variance})
            reports.append(report)
    return reports


def log_log_slopes(reports: Sequence[VarianceReport]) -> Dict[str, float]:
    """Least-squares slope of log mean variance against log M, per estimator."""
    slopes = {}
    for estimator in sorted({r.estimator for r in reports}):
        rows = sorted((r for r in reports if r.estimator == estimator), key=lambda r: r.grad_samples)
        if len(rows) < 2:
            continue
        x = np.log([r.grad_samples for r in rows])
        y = np.log([r.mean_variance for r in rows])
        slopes[estimator] = float(np.polyfit(x, y, 1)[0])
    return slopes
