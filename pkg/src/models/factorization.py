"""Matrix factorization and probabilistic PCA models."""
import math
from typing import Optional

import numpy as np

from ..core import autodiff as ad
from ..core import densities as dens
from ..core.transforms import ConstraintSpec, ParameterBlock
from .base import DataField, ModelDefinition
from .registry import register

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _poisson_factor_likelihood(theta, beta, counts) -> object:
    """sum_{u,i} log Poisson(y_ui | theta_u . beta_i)."""
    terms = []
    lgamma_const = 0.0
    for u, row in enumerate(counts):
        for i, y in enumerate(row):
            rate = ad.inner(theta[u], beta[i])
            if y:
                terms.append(ad.sub(ad.mul(float(y), ad.log(rate)), rate))
                lgamma_const += math.lgamma(y + 1.0)
            else:
                terms.append(ad.neg(rate))
    return ad.sub(ad.sum_all(terms), lgamma_const)


def _row_point_log_likelihood(values, data, u) -> float:
    theta = np.asarray(values["theta"])[u]
    beta = np.asarray(values["beta"])
    rates = beta @ theta
    return float(sum(dens.poisson(int(y), float(r)) for y, r in zip(data["y"][u], rates)))


@register("gamma_poisson_nmf")
def gamma_poisson_nmf(k: int = 10, a: float = 1.0, b: float = 1.0, c: float = 1.0, d: float = 1.0) -> ModelDefinition:
    """Poisson factorization of a U x I count matrix with Gamma factors.

    Each user vector theta_u is positive and ordered, which removes the
    permutation symmetry of the factors.
    """

    def blocks(dims):
        return [
            ParameterBlock("theta", ConstraintSpec.positive_ordered(dims["K"]), count=dims["U"]),
            ParameterBlock("beta", ConstraintSpec.positive(dims["K"]), count=dims["I"]),
        ]

    def log_prior(values, data):
        terms = [dens.gamma(t, a, b) for row in values["theta"] for t in row]
        terms.extend(dens.gamma(v, c, d) for row in values["beta"] for v in row)
        return ad.sum_all(terms)

    def log_likelihood(values, data):
        return _poisson_factor_likelihood(values["theta"], values["beta"], data["y"])

    def simulate(rng, users: int = 5, items: int = 5):
        theta = np.sort(rng.gamma(a, 1.0 / b, size=(users, k)), axis=1)
        beta = rng.gamma(c, 1.0 / d, size=(items, k))
        return {"y": rng.poisson(theta @ beta.T).tolist()}

    return ModelDefinition(
        name="gamma_poisson_nmf",
        description="y_ui ~ Poisson(theta_u . beta_i), Gamma priors, ordered theta_u",
        data_schema=(DataField("y", ("U", "I"), "int", "nonnegative"),),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        observation_dim="U",
        point_log_likelihood=_row_point_log_likelihood,
        simulate=simulate,
        supports_subsampling=False,
        fixed_dims={"K": k},
    )


@register("dirichlet_exponential_nmf")
def dirichlet_exponential_nmf(k: int = 10, alpha0: float = 1000.0, lambda0: float = 0.1) -> ModelDefinition:
    """Poisson factorization with simplex user weights and exponential item factors."""

    def blocks(dims):
        return [
            ParameterBlock("theta", ConstraintSpec.simplex(dims["K"]), count=dims["U"]),
            ParameterBlock("beta", ConstraintSpec.positive(dims["K"]), count=dims["I"]),
        ]

    def log_prior(values, data):
        terms = [dens.symmetric_dirichlet(row, alpha0) for row in values["theta"]]
        terms.extend(dens.exponential(v, lambda0) for row in values["beta"] for v in row)
        return ad.sum_all(terms)

    def log_likelihood(values, data):
        return _poisson_factor_likelihood(values["theta"], values["beta"], data["y"])

    def simulate(rng, users: int = 5, items: int = 5):
        theta = rng.dirichlet(np.full(k, alpha0), size=users)
        beta = rng.exponential(1.0 / lambda0, size=(items, k))
        return {"y": rng.poisson(theta @ beta.T).tolist()}

    return ModelDefinition(
        name="dirichlet_exponential_nmf",
        description="y_ui ~ Poisson(theta_u . beta_i), theta_u ~ Dir(alpha0), beta ~ Exponential(lambda0)",
        data_schema=(DataField("y", ("U", "I"), "int", "nonnegative"),),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        observation_dim="U",
        point_log_likelihood=_row_point_log_likelihood,
        simulate=simulate,
        supports_subsampling=False,
        fixed_dims={"K": k},
    )


def _ppca_blocks(dims, supervised: bool):
    m = dims["M"]
    found = [
        ParameterBlock("z", ConstraintSpec.unconstrained(m), count=dims["N"]),
        ParameterBlock("w", ConstraintSpec.unconstrained(m), count=dims["D"]),
    ]
    if supervised:
        found.append(ParameterBlock("w_y", ConstraintSpec.unconstrained(m)))
    found.append(ParameterBlock("sigma", ConstraintSpec.positive(), scalar=True))
    found.append(ParameterBlock("alpha", ConstraintSpec.positive(m)))
    return found


def _ppca_prior(values, weight_rows, alpha_shape: float, alpha_scale: float):
    """Standard normal z, ARD weights w_dm ~ N(0, sigma / sqrt(alpha_m)), LogNormal sigma, InvGamma alpha."""
    sigma, alpha = values["sigma"], values["alpha"]
    terms = [dens.std_normal(v) for row in values["z"] for v in row]
    terms.append(dens.lognormal(sigma, 0.0, 1.0))
    terms.extend(dens.inv_gamma(a, alpha_shape, alpha_scale) for a in alpha)
    log_sigma = ad.log(sigma)
    inv_var = ad.div(1.0, ad.mul(sigma, sigma))
    # log N(w; 0, sigma / sqrt(alpha)) = -log(2 pi)/2 - log sigma + log(alpha)/2 - alpha w^2 / (2 sigma^2)
    weighted = []
    for m, a in enumerate(alpha):
        column = [row[m] for row in weight_rows]
        sq = ad.sum_squares(column)
        count = float(len(column))
        terms.append(ad.mul(count, ad.sub(ad.mul(0.5, ad.log(a)), ad.add(HALF_LOG_2PI, log_sigma))))
        weighted.append(ad.mul(a, sq))
    terms.append(ad.neg(ad.mul(ad.mul(0.5, inv_var), ad.sum_all(weighted))))
    return ad.sum_all(terms)


def _gaussian_rows(targets, means, sigma):
    residuals = [ad.sub(float(t), mval) for t, mval in zip(targets, means)]
    sq = ad.sum_squares(residuals)
    count = float(len(residuals))
    norm = ad.mul(-count, ad.add(HALF_LOG_2PI, ad.log(sigma)))
    return ad.sub(norm, ad.div(ad.mul(0.5, sq), ad.mul(sigma, sigma)))


def _simulate_low_rank(rng, n: int, d: int, rank: int, noise: float):
    z = rng.normal(size=(n, rank))
    w = rng.normal(size=(d, rank)) * 2.0
    x = z @ w.T + noise * rng.normal(size=(n, d))
    return z, w, x


@register("ppca_ard")
def ppca_ard(m: int = 5, alpha_shape: float = 1.0, alpha_scale: float = 1.0) -> ModelDefinition:
    """Probabilistic PCA with an ARD prior over the M latent dimensions.

    alpha_m acts as a precision on column m of W, so dimensions the data
    does not need are driven to large alpha and shrunk to zero.
    """

    def blocks(dims):
        return _ppca_blocks(dims, supervised=False)

    def log_prior(values, data):
        return _ppca_prior(values, values["w"], alpha_shape, alpha_scale)

    def log_likelihood(values, data):
        z, w = values["z"], values["w"]
        targets, means = [], []
        for n, row in enumerate(data["x"]):
            for d_idx, value in enumerate(row):
                targets.append(value)
                means.append(ad.inner(w[d_idx], z[n]))
        return _gaussian_rows(targets, means, values["sigma"])

    def simulate(rng, n: int = 500, d: int = 10, rank: int = 2, noise: float = 0.5):
        _, _, x = _simulate_low_rank(rng, n, d, rank, noise)
        return {"x": x.tolist()}

    return ModelDefinition(
        name="ppca_ard",
        description="x_n ~ N(W z_n, sigma), ARD prior over latent dimensions",
        data_schema=(DataField("x", ("N", "D")),),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        simulate=simulate,
        supports_subsampling=False,
        fixed_dims={"M": m},
    )


@register("sup_ppca_ard")
def sup_ppca_ard(m: int = 5, alpha_shape: float = 1.0, alpha_scale: float = 1.0) -> ModelDefinition:
    """Supervised PPCA: a scalar response y_n ~ N(w_y . z_n, sigma) shares the latent space and ARD prior."""

    def blocks(dims):
        return _ppca_blocks(dims, supervised=True)

    def log_prior(values, data):
        weight_rows = list(values["w"]) + [values["w_y"]]
        return _ppca_prior(values, weight_rows, alpha_shape, alpha_scale)

    def log_likelihood(values, data):
        z, w, w_y = values["z"], values["w"], values["w_y"]
        targets, means = [], []
        for n, (row, y) in enumerate(zip(data["x"], data["y"])):
            for d_idx, value in enumerate(row):
                targets.append(value)
                means.append(ad.inner(w[d_idx], z[n]))
            targets.append(y)
            means.append(ad.inner(w_y, z[n]))
        return _gaussian_rows(targets, means, values["sigma"])

    def simulate(rng, n: int = 500, d: int = 10, rank: int = 2, noise: float = 0.5,
                 response_noise: Optional[float] = None):
        z, _, x = _simulate_low_rank(rng, n, d, rank, noise)
        scale = noise if response_noise is None else response_noise
        y = z[:, 0] + scale * rng.normal(size=n)
        return {"x": x.tolist(), "y": y.tolist(), "z_true": z.tolist()}

    return ModelDefinition(
        name="sup_ppca_ard",
        description="PPCA with a jointly modelled response sharing the latent space",
        data_schema=(DataField("x", ("N", "D")), DataField("y", ("N",))),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        simulate=simulate,
        supports_subsampling=False,
        fixed_dims={"M": m},
    )
