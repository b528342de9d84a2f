"""Small models with closed-form checks: Weibull-Poisson, conjugate Gaussian, fixed targets."""
import math
from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy import stats

from ..core import autodiff as ad
from ..core import densities as dens
from ..core.exceptions import SupportError
from ..core.transforms import ConstraintSpec, ParameterBlock
from .base import DataField, DatasetHandle, ModelDefinition
from .registry import register

WEIBULL_SHAPE = 1.5
WEIBULL_SCALE = 1.0


@register("weibull_poisson")
def weibull_poisson() -> ModelDefinition:
    """Poisson counts with a Weibull(1.5, 1) prior on the rate."""

    def blocks(dims):
        return [ParameterBlock("theta", ConstraintSpec.positive(), scalar=True)]

    def log_prior(values, data):
        return dens.weibull(values["theta"], WEIBULL_SHAPE, WEIBULL_SCALE)

    def log_likelihood(values, data):
        theta = values["theta"]
        x = data["x"]
        const = float(np.sum([math.lgamma(c + 1.0) for c in x]))
        # sum_n x_n log(theta) - N theta - sum_n log(x_n!)
        return ad.sub(ad.sub(ad.mul(float(np.sum(x)), ad.log(theta)), ad.mul(float(x.size), theta)), const)

    def point_log_likelihood(values, data, n):
        return float(dens.poisson(int(data["x"][n]), float(values["theta"])))

    def simulate(rng, n: int = 20, theta: Optional[float] = None):
        theta = float(rng.weibull(WEIBULL_SHAPE) * WEIBULL_SCALE) if theta is None else theta
        return {"x": rng.poisson(theta, size=n).tolist()}

    return ModelDefinition(
        name="weibull_poisson",
        description="x_n ~ Poisson(theta), theta ~ Weibull(1.5, 1)",
        data_schema=(DataField("x", ("N",), "int", "nonnegative", per_observation=True),),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        point_log_likelihood=point_log_likelihood,
        simulate=simulate,
    )


def _correlated(correlation: float) -> np.ndarray:
    return np.array([[1.0, correlation], [correlation, 1.0]])


@register("mvn_conjugate")
def mvn_conjugate(correlation: float = 0.9, prior_scale: float = 1.0,
                  covariance: Optional[Sequence[Sequence[float]]] = None) -> ModelDefinition:
    """Unknown 2-D mean, known correlated covariance, Gaussian prior: posterior is Gaussian."""
    cov = np.asarray(covariance, dtype=float) if covariance is not None else _correlated(correlation)
    precision = np.linalg.inv(cov)
    _, log_det = np.linalg.slogdet(cov)
    pairs = [(0, 0), (0, 1), (1, 1)]
    pair_weights = [precision[0, 0], 2.0 * precision[0, 1], precision[1, 1]]

    def blocks(dims):
        return [ParameterBlock("mu", ConstraintSpec.unconstrained(2))]

    def log_prior(values, data):
        return ad.sum_all([dens.normal(m, 0.0, prior_scale) for m in values["mu"]])

    def log_likelihood(values, data):
        mu = values["mu"]
        y = data["y"]
        n = y.shape[0]
        total = y.sum(axis=0)
        quad_data = float(np.einsum("ni,ij,nj->", y, precision, y))
        # -1/2 sum_n (y_n - mu)^T P (y_n - mu) expanded around the sufficient statistics
        linear = ad.dot(precision @ total, mu)
        quad_mu = ad.dot(pair_weights, [ad.mul(mu[i], mu[j]) for i, j in pairs])
        const = -0.5 * n * (2.0 * math.log(2.0 * math.pi) + log_det) - 0.5 * quad_data
        return ad.add(const, ad.sub(linear, ad.mul(0.5 * n, quad_mu)))

    def point_log_likelihood(values, data, n):
        return float(stats.multivariate_normal.logpdf(data["y"][n], mean=np.asarray(values["mu"]), cov=cov))

    def analytic_posterior(data: DatasetHandle):
        y = data["y"]
        prior_precision = np.eye(2) / prior_scale ** 2
        post_precision = prior_precision + y.shape[0] * precision
        post_cov = np.linalg.inv(post_precision)
        post_mean = post_cov @ (precision @ y.sum(axis=0))
        return post_mean, post_cov

    def simulate(rng, n: int = 1000, mean: Optional[Sequence[float]] = None):
        mean = rng.normal(0.0, prior_scale, size=2) if mean is None else np.asarray(mean, dtype=float)
        return {"y": rng.multivariate_normal(mean, cov, size=n).tolist()}

    return ModelDefinition(
        name="mvn_conjugate",
        description="y_n ~ N(mu, Sigma) with known Sigma, mu ~ N(0, s^2 I)",
        data_schema=(DataField("y", ("N", 2), per_observation=True),),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        point_log_likelihood=point_log_likelihood,
        analytic_posterior=analytic_posterior,
        simulate=simulate,
        options={"covariance": cov, "prior_scale": prior_scale},
    )


@register("gaussian_target")
def gaussian_target(mean: Sequence[float] = (0.0,),
                    cov: Optional[Sequence[Sequence[float]]] = None) -> ModelDefinition:
    """A fixed Gaussian density with no data; N(0, 1) by default."""
    mean = np.asarray(mean, dtype=float).ravel()
    d = mean.size
    cov = np.eye(d) if cov is None else np.asarray(cov, dtype=float)
    chol = np.linalg.cholesky(cov)

    def blocks(dims):
        return [ParameterBlock("theta", ConstraintSpec.unconstrained(d))]

    def log_prior(values, data):
        theta = values["theta"]
        if d == 1:
            return dens.normal(theta[0], float(mean[0]), float(chol[0, 0]))
        return dens.multi_normal_cholesky(theta, list(mean), chol)

    return ModelDefinition(
        name="gaussian_target",
        description="theta ~ N(m, Sigma), no observations",
        data_schema=(),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=lambda values, data: 0.0,
        observation_dim=None,
        supports_subsampling=False,
        analytic_posterior=lambda data: (mean.copy(), cov.copy()),
        simulate=lambda rng, **_: {},
        options={"mean": mean, "cov": cov},
    )


@register("gamma_target")
def gamma_target(shape: float = 10.0, rate: float = 10.0, normalized: bool = True) -> ModelDefinition:
    """A fixed Gamma(shape, rate) density on a positive scalar.

    With ``normalized=False`` the log density drops ``a log b - lgamma(a)``,
    which shifts the ELBO by that constant and leaves its gradients unchanged.
    """

    def blocks(dims):
        return [ParameterBlock("theta", ConstraintSpec.positive(), scalar=True)]

    def log_kernel(values, data):
        theta = values["theta"]
        if not ad.value_of(theta) > 0.0:
            raise SupportError("gamma", ad.value_of(theta))
        return ad.sub(ad.mul(shape - 1.0, ad.log(theta)), ad.mul(rate, theta))

    return ModelDefinition(
        name="gamma_target",
        description=f"theta ~ Gamma({shape:g}, {rate:g}), no observations",
        data_schema=(),
        blocks=blocks,
        log_prior=(lambda values, data: dens.gamma(values["theta"], shape, rate)) if normalized else log_kernel,
        log_likelihood=lambda values, data: 0.0,
        observation_dim=None,
        supports_subsampling=False,
        simulate=lambda rng, **_: {},
        options={"shape": shape, "rate": rate, "normalized": normalized},
    )


def target_distribution(model: ModelDefinition) -> Any:
    """The scipy frozen distribution behind a fixed-target model."""
    if model.name == "gamma_target":
        return stats.gamma(a=model.options["shape"], scale=1.0 / model.options["rate"])
    if model.name == "gaussian_target":
        mean, cov = model.options["mean"], model.options["cov"]
        if mean.size == 1:
            return stats.norm(loc=mean[0], scale=math.sqrt(cov[0, 0]))
        return stats.multivariate_normal(mean=mean, cov=cov)
    raise ValueError(f"model '{model.name}' is not a fixed target")


def empty_data(model: ModelDefinition) -> Dict[str, Any]:
    return {f.name: [] for f in model.data_schema}
