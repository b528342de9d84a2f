"""Stochastic volatility model."""
import math

import numpy as np

from ..core import autodiff as ad
from ..core import densities as dens
from ..core.transforms import ConstraintSpec, ParameterBlock
from .base import DataField, ModelDefinition
from .registry import register

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@register("stochastic_volatility")
def stochastic_volatility(mu_scale: float = 10.0, sigma_scale: float = 10.0) -> ModelDefinition:
    """Log-volatility AR(1) process behind zero-mean returns.

    y_t ~ N(0, exp(h_t / 2)), h_1 ~ N(mu, sigma / sqrt(1 - phi^2)),
    h_t ~ N(mu + phi (h_{t-1} - mu), sigma), mu ~ Cauchy(0, 10),
    phi ~ Uniform(-1, 1), sigma ~ LogNormal(0, 10).
    """

    def blocks(dims):
        return [
            ParameterBlock("mu", ConstraintSpec.unconstrained(), scalar=True),
            ParameterBlock("phi", ConstraintSpec.interval(-1.0, 1.0), scalar=True),
            ParameterBlock("sigma", ConstraintSpec.positive(), scalar=True),
            ParameterBlock("h", ConstraintSpec.unconstrained(dims["T"])),
        ]

    def log_prior(values, data):
        mu, phi, sigma, h = values["mu"], values["phi"], values["sigma"], values["h"]
        terms = [
            dens.cauchy(mu, 0.0, mu_scale),
            dens.uniform(phi, -1.0, 1.0),
            dens.lognormal(sigma, 0.0, sigma_scale),
        ]
        if not h:
            return ad.sum_all(terms)
        stationary_sd = ad.div(sigma, ad.sqrt(ad.sub(1.0, ad.mul(phi, phi))))
        terms.append(dens.normal(h[0], mu, stationary_sd))
        if len(h) > 1:
            innovations = [
                ad.sub(ad.sub(h[t], mu), ad.mul(phi, ad.sub(h[t - 1], mu)))
                for t in range(1, len(h))
            ]
            sq = ad.sum_squares(innovations)
            count = float(len(innovations))
            terms.append(ad.mul(-count, ad.add(HALF_LOG_2PI, ad.log(sigma))))
            terms.append(ad.neg(ad.div(ad.mul(0.5, sq), ad.mul(sigma, sigma))))
        return ad.sum_all(terms)

    def log_likelihood(values, data):
        h = values["h"]
        y = data["y"]
        # log N(y; 0, exp(h/2)) = -log(2 pi)/2 - h/2 - y^2 exp(-h) / 2
        scaled = ad.dot(0.5 * y * y, [ad.exp(ad.neg(ht)) for ht in h])
        return ad.sub(ad.sub(-HALF_LOG_2PI * len(h), ad.mul(0.5, ad.sum_all(h))), scaled)

    def point_log_likelihood(values, data, t):
        h_t = float(np.asarray(values["h"])[t])
        return float(dens.normal(float(data["y"][t]), 0.0, math.exp(h_t / 2.0)))

    def simulate(rng, t: int = 500, mu: float = -1.025, phi: float = 0.9, sigma: float = 0.6):
        h = np.empty(t)
        h[0] = rng.normal(mu, sigma / math.sqrt(1.0 - phi ** 2))
        for i in range(1, t):
            h[i] = rng.normal(mu + phi * (h[i - 1] - mu), sigma)
        y = np.exp(h / 2.0) * rng.normal(size=t)
        return {"y": y.tolist(), "h_true": h.tolist()}

    return ModelDefinition(
        name="stochastic_volatility",
        description="AR(1) log-volatility with Cauchy, uniform and log-normal priors",
        data_schema=(DataField("y", ("T",)),),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        observation_dim="T",
        point_log_likelihood=point_log_likelihood,
        simulate=simulate,
        supports_subsampling=False,
    )
