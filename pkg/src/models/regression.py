"""Regression models: logistic, ARD linear, hierarchical logistic and tanh regression."""
import math
from typing import Optional

import numpy as np
from scipy import special

from ..core import autodiff as ad
from ..core import densities as dens
from ..core.transforms import ConstraintSpec, ParameterBlock
from .base import DataField, ModelDefinition
from .registry import register

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _gaussian_sum(residuals, log_sigma, sigma, count: int):
    """sum_n log N(r_n; 0, sigma) for residuals already formed on the tape."""
    sq = ad.sum_squares(residuals)
    norm = ad.mul(-float(count), ad.add(HALF_LOG_2PI, log_sigma))
    return ad.sub(norm, ad.div(ad.mul(0.5, sq), ad.mul(sigma, sigma)))


@register("logistic_regression")
def logistic_regression(prior_scale: float = 1.0) -> ModelDefinition:
    """Bernoulli-logit regression with independent N(0, s) coefficients."""

    def blocks(dims):
        return [ParameterBlock("beta", ConstraintSpec.unconstrained(dims["D"]))]

    def log_prior(values, data):
        return ad.sum_all([dens.normal(b, 0.0, prior_scale) for b in values["beta"]])

    def log_likelihood(values, data):
        beta = values["beta"]
        return ad.sum_all([
            dens.bernoulli_logit(int(y), ad.dot(x, beta))
            for x, y in zip(data["X"], data["y"])
        ])

    def point_log_likelihood(values, data, n):
        logit = float(np.dot(data["X"][n], np.asarray(values["beta"])))
        return float(dens.bernoulli_logit(int(data["y"][n]), logit))

    def simulate(rng, n: int = 1000, covariates: int = 9, intercept: bool = True,
                 beta: Optional[list] = None):
        x = rng.normal(size=(n, covariates))
        if intercept:
            x = np.hstack([np.ones((n, 1)), x])
        beta = rng.normal(0.0, prior_scale, size=x.shape[1]) if beta is None else np.asarray(beta)
        y = rng.binomial(1, special.expit(x @ beta))
        return {"X": x.tolist(), "y": y.tolist(), "beta_true": beta.tolist()}

    return ModelDefinition(
        name="logistic_regression",
        description="y_n ~ Bernoulli(logistic(x_n . beta)), beta_d ~ N(0, 1)",
        data_schema=(
            DataField("X", ("N", "D"), per_observation=True),
            DataField("y", ("N",), "int", "binary", per_observation=True),
        ),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        point_log_likelihood=point_log_likelihood,
        simulate=simulate,
    )


@register("linreg_ard")
def linreg_ard(a0: float = 1.0, b0: float = 1.0, c0: float = 1.0, d0: float = 1.0) -> ModelDefinition:
    """Linear regression with automatic relevance determination on the weights.

    w_d ~ N(0, sigma / sqrt(alpha_d)), sigma ~ InvGamma(a0, b0),
    alpha_d ~ Gamma(c0, d0), y_n ~ N(x_n . w, sigma).
    """

    def blocks(dims):
        d = dims["D"]
        return [
            ParameterBlock("w", ConstraintSpec.unconstrained(d)),
            ParameterBlock("sigma", ConstraintSpec.positive(), scalar=True),
            ParameterBlock("alpha", ConstraintSpec.positive(d)),
        ]

    def log_prior(values, data):
        sigma, alpha = values["sigma"], values["alpha"]
        terms = [dens.inv_gamma(sigma, a0, b0)]
        for w_d, a_d in zip(values["w"], alpha):
            terms.append(dens.normal(w_d, 0.0, ad.div(sigma, ad.sqrt(a_d))))
            terms.append(dens.gamma(a_d, c0, d0))
        return ad.sum_all(terms)

    def log_likelihood(values, data):
        w, sigma = values["w"], values["sigma"]
        residuals = [ad.sub(float(y), ad.dot(x, w)) for x, y in zip(data["X"], data["y"])]
        return _gaussian_sum(residuals, ad.log(sigma), sigma, len(residuals))

    def point_log_likelihood(values, data, n):
        mean = float(np.dot(data["X"][n], np.asarray(values["w"])))
        return float(dens.normal(float(data["y"][n]), mean, float(values["sigma"])))

    def simulate(rng, n: int = 200, d: int = 10, noise: float = 1.0):
        w = rng.normal(size=d)
        w[d // 2:] = 0.0  # the second half of the regressors has no predictive power
        x = rng.normal(size=(n, d))
        y = x @ w + noise * rng.normal(size=n)
        return {"X": x.tolist(), "y": y.tolist(), "w_true": w.tolist()}

    return ModelDefinition(
        name="linreg_ard",
        description="linear regression with ARD prior on the weights",
        data_schema=(
            DataField("X", ("N", "D"), per_observation=True),
            DataField("y", ("N",), per_observation=True),
        ),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        point_log_likelihood=point_log_likelihood,
        simulate=simulate,
    )


@register("hier_logistic")
def hier_logistic(n_age: int = 4, n_edu: int = 4, n_region: int = 5,
                  beta_scale: float = 10.0, sigma_upper: float = 100.0) -> ModelDefinition:
    """Multilevel logistic regression over age, education, state and region groups.

    Individual-level fixed effects are an intercept, female, black and
    female x black. Group effects a_age, a_edu, a_age_edu and a_state are
    normal around zero (a_state around its region effect plus a state-level
    previous-vote slope). Every group scale has a uniform prior on (0, 100).
    """
    scales = ["sigma_age", "sigma_edu", "sigma_age_edu", "sigma_region", "sigma_state"]

    def blocks(dims):
        found = [
            ParameterBlock("beta", ConstraintSpec.unconstrained(5)),
            ParameterBlock("a_age", ConstraintSpec.unconstrained(dims["A"])),
            ParameterBlock("a_edu", ConstraintSpec.unconstrained(dims["E"])),
            ParameterBlock("a_age_edu", ConstraintSpec.unconstrained(dims["E"]), count=dims["A"]),
            ParameterBlock("a_region", ConstraintSpec.unconstrained(dims["R"])),
            ParameterBlock("a_state", ConstraintSpec.unconstrained(dims["S"])),
        ]
        found.extend(ParameterBlock(s, ConstraintSpec.interval(0.0, sigma_upper), scalar=True) for s in scales)
        return found

    def _group(effects, sigma, means=None):
        if means is None:
            return [dens.normal(a, 0.0, sigma) for a in effects]
        return [dens.normal(a, m, sigma) for a, m in zip(effects, means)]

    def log_prior(values, data):
        beta = values["beta"]
        terms = [dens.normal(b, 0.0, beta_scale) for b in beta]
        terms.extend(dens.uniform(values[s], 0.0, sigma_upper) for s in scales)
        terms.extend(_group(values["a_age"], values["sigma_age"]))
        terms.extend(_group(values["a_edu"], values["sigma_edu"]))
        for row in values["a_age_edu"]:
            terms.extend(_group(row, values["sigma_age_edu"]))
        terms.extend(_group(values["a_region"], values["sigma_region"]))
        region = data["region"]
        state_means = [
            ad.add(values["a_region"][int(region[j]) - 1], ad.mul(float(data["v_prev"][j]), beta[4]))
            for j in range(len(region))
        ]
        terms.extend(_group(values["a_state"], values["sigma_state"], state_means))
        return ad.sum_all(terms)

    def _logit(values, female, black, age, edu, state):
        beta = values["beta"]
        return ad.sum_all([
            beta[0],
            ad.dot([female, black, female * black], beta[1:4]),
            values["a_age"][age - 1],
            values["a_edu"][edu - 1],
            values["a_age_edu"][age - 1][edu - 1],
            values["a_state"][state - 1],
        ])

    def log_likelihood(values, data):
        cells = np.column_stack([data["female"], data["black"], data["age"], data["edu"], data["state"]])
        # observations sharing a covariate cell share one logit
        keys, inverse = np.unique(cells, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        successes = np.bincount(inverse, weights=data["y"], minlength=len(keys))
        totals = np.bincount(inverse, minlength=len(keys))
        terms = []
        for key, n1, n in zip(keys, successes, totals):
            logit = _logit(values, *(int(k) for k in key))
            if n1 > 0:
                terms.append(ad.mul(float(n1), dens.bernoulli_logit(1, logit)))
            if n - n1 > 0:
                terms.append(ad.mul(float(n - n1), dens.bernoulli_logit(0, logit)))
        return ad.sum_all(terms)

    def point_log_likelihood(values, data, n):
        logit = float(_logit(values, int(data["female"][n]), int(data["black"][n]), int(data["age"][n]),
                             int(data["edu"][n]), int(data["state"][n])))
        return float(dens.bernoulli_logit(int(data["y"][n]), logit))

    def simulate(rng, n: int = 1000, n_state: int = 10, group_scale: float = 0.5):
        region = np.arange(n_state) % n_region + 1
        v_prev = rng.normal(size=n_state)
        beta = rng.normal(0.0, 1.0, size=5)
        a_age = rng.normal(0.0, group_scale, size=n_age)
        a_edu = rng.normal(0.0, group_scale, size=n_edu)
        a_age_edu = rng.normal(0.0, group_scale, size=(n_age, n_edu))
        a_region = rng.normal(0.0, group_scale, size=n_region)
        a_state = rng.normal(a_region[region - 1] + beta[4] * v_prev, group_scale)
        female = rng.integers(0, 2, size=n)
        black = rng.integers(0, 2, size=n)
        age = rng.integers(1, n_age + 1, size=n)
        edu = rng.integers(1, n_edu + 1, size=n)
        state = rng.integers(1, n_state + 1, size=n)
        logit = (beta[0] + beta[1] * female + beta[2] * black + beta[3] * female * black
                 + a_age[age - 1] + a_edu[edu - 1] + a_age_edu[age - 1, edu - 1] + a_state[state - 1])
        y = rng.binomial(1, special.expit(logit))
        return {
            "y": y.tolist(), "female": female.tolist(), "black": black.tolist(),
            "age": age.tolist(), "edu": edu.tolist(), "state": state.tolist(),
            "region": region.tolist(), "v_prev": v_prev.tolist(),
        }

    return ModelDefinition(
        name="hier_logistic",
        description="multilevel logistic regression with age, education, state and region effects",
        data_schema=(
            DataField("region", ("S",), "int", "index:R"),
            DataField("v_prev", ("S",)),
            DataField("y", ("N",), "int", "binary", per_observation=True),
            DataField("female", ("N",), "int", "binary", per_observation=True),
            DataField("black", ("N",), "int", "binary", per_observation=True),
            DataField("age", ("N",), "int", "index:A", per_observation=True),
            DataField("edu", ("N",), "int", "index:E", per_observation=True),
            DataField("state", ("N",), "int", "index:S", per_observation=True),
        ),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        point_log_likelihood=point_log_likelihood,
        simulate=simulate,
        fixed_dims={"A": n_age, "E": n_edu, "R": n_region},
    )


@register("tanh_regression")
def tanh_regression(noise: float = 1.0) -> ModelDefinition:
    """Nonlinear regression y_n ~ N(tanh(x_n . beta), noise) with beta_d ~ N(0, 1)."""

    def blocks(dims):
        return [ParameterBlock("beta", ConstraintSpec.unconstrained(dims["D"]))]

    def log_prior(values, data):
        return ad.sum_all([dens.std_normal(b) for b in values["beta"]])

    def log_likelihood(values, data):
        beta = values["beta"]
        residuals = [ad.sub(float(y), ad.tanh(ad.dot(x, beta))) for x, y in zip(data["X"], data["y"])]
        return _gaussian_sum(residuals, math.log(noise), noise, len(residuals))

    def point_log_likelihood(values, data, n):
        mean = math.tanh(float(np.dot(data["X"][n], np.asarray(values["beta"]))))
        return float(dens.normal(float(data["y"][n]), mean, noise))

    def simulate(rng, n: int = 100, d: int = 10):
        x = rng.normal(size=(n, d)) / math.sqrt(d)
        beta = rng.normal(size=d)
        y = np.tanh(x @ beta) + noise * rng.normal(size=n)
        return {"X": x.tolist(), "y": y.tolist()}

    return ModelDefinition(
        name="tanh_regression",
        description="y_n ~ N(tanh(x_n . beta), I), beta ~ N(0, I)",
        data_schema=(
            DataField("X", ("N", "D"), per_observation=True),
            DataField("y", ("N",), per_observation=True),
        ),
        blocks=blocks,
        log_prior=log_prior,
        log_likelihood=log_likelihood,
        point_log_likelihood=point_log_likelihood,
        simulate=simulate,
    )
