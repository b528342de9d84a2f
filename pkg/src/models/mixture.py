"""Gaussian mixture with the discrete assignments summed out."""
import math
from typing import Optional, Sequence

import numpy as np
from scipy import special

from ..core import autodiff as ad
from ..core import densities as dens
from ..core.transforms import ConstraintSpec, ParameterBlock
from .base import DataField, ModelDefinition
from .registry import register

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def component_log_densities(y: np.ndarray, theta, mu, sigma) -> np.ndarray:
    """Float path: log theta_k + sum_d log N(y_nd; mu_kd, sigma_kd), shape N x K."""
    theta = np.asarray(theta, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    z = (y[:, None, :] - mu[None, :, :]) / sigma[None, :, :]
    per_dim = -HALF_LOG_2PI - np.log(sigma)[None, :, :] - 0.5 * z * z
    return np.log(theta)[None, :] + per_dim.sum(axis=2)


@register("gmm")
def gmm(k: int = 2, alpha0: float = 1000.0) -> ModelDefinition:
    """Diagonal Gaussian mixture with K components.

    theta ~ Dir(alpha0), mu_kd ~ N(0, 1), sigma_kd ~ LogNormal(0, 1),
    p(y_n) = sum_k theta_k prod_d N(y_nd; mu_kd, sigma_kd).
    """

    def blocks(dims):
        return [
            ParameterBlock("theta", ConstraintSpec.simplex(dims["K"])),
            ParameterBlock("mu", ConstraintSpec.unconstrained(dims["D"]), count=dims["K"]),
            ParameterBlock("sigma", ConstraintSpec.positive(dims["D"]), count=dims["K"]),
        ]

    def log_prior(values, data):
        terms = [dens.symmetric_dirichlet(values["theta"], alpha0)]
        terms.extend(dens.std_normal(m) for row in values["mu"] for m in row)
        terms.extend(dens.lognormal(s, 0.0, 1.0) for row in values["sigma"] for s in row)
        return ad.sum_all(terms)

    def log_likelihood(values, data):
        theta, mu, sigma = values["theta"], values["mu"], values["sigma"]
        y = data["y"]
        d = y.shape[1]
        # per component: log theta_k - sum_d log sigma_kd - D log(2 pi) / 2
        offsets = []
        inv_sigma = []
        for kk in range(len(theta)):
            log_norm = ad.sum_all([ad.log(s) for s in sigma[kk]])
            offsets.append(ad.sub(ad.sub(ad.log(theta[kk]), log_norm), d * HALF_LOG_2PI))
            inv_sigma.append([ad.div(1.0, s) for s in sigma[kk]])
        terms = []
        for row in y:
            comps = []
            for kk in range(len(theta)):
                z = [ad.mul(ad.sub(float(v), m), inv) for v, m, inv in zip(row, mu[kk], inv_sigma[kk])]
                comps.append(ad.sub(offsets[kk], ad.mul(0.5, ad.sum_squares(z))))
            terms.append(ad.log_sum_exp(comps))
        return ad.sum_all(terms)

    def point_log_likelihood(values, data, n):
        comp = component_log_densities(data["y"][n:n + 1], values["theta"], values["mu"], values["sigma"])
        return float(special.logsumexp(comp[0]))

    def simulate(rng, n: int = 500, d: int = 2, separation: float = 4.0,
                 means: Optional[Sequence[Sequence[float]]] = None, scale: float = 1.0):
        if means is None:
            means = rng.normal(size=(k, d))
            means *= separation / max(np.linalg.norm(means[0] - means[-1]), 1e-12) if k > 1 else 1.0
        means = np.asarray(means, dtype=float)
        labels = rng.integers(0, k, size=n)
        y = means[labels] + scale * rng.normal(size=(n, means.shape[1]))
        return {"y": y.tolist(), "means_true": means.tolist()}

    return ModelDefinition(
        name="gmm",
        description="Gaussian mixture, assignments marginalized with log-sum-exp",
        data_schema=(DataField("y", ("N", "D"), per_observation=True),),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        point_log_likelihood=point_log_likelihood,
        simulate=simulate,
        fixed_dims={"K": k},
    )
