"""Log densities and log mass functions with full normalizing constants.

Every function takes the value first and the parameters after it; each
argument may be a float or an autodiff :class:`~src.core.autodiff.Var`.
A value outside the support raises :class:`SupportError`, a parameter
outside its domain raises :class:`ParameterDomainError`.
"""
from __future__ import annotations

import math
from enum import Enum
from typing import Callable, Dict, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Scalar, value_of
from .exceptions import ParameterDomainError, SupportError

LOG_2PI = math.log(2.0 * math.pi)
LOG_PI = math.log(math.pi)
SIMPLEX_TOLERANCE = 1e-8


def _positive(dist: str, name: str, x: Scalar) -> None:
    v = value_of(x)
    if not (v > 0.0 and math.isfinite(v)):
        raise ParameterDomainError(dist, name, v)


def _finite(dist: str, name: str, x: Scalar) -> None:
    v = value_of(x)
    if not math.isfinite(v):
        raise ParameterDomainError(dist, name, v)


def _count(dist: str, x) -> float:
    v = value_of(x)
    if v < 0 or not float(v).is_integer():
        raise SupportError(dist, v)
    return v


def normal(y: Scalar, mu: Scalar, sigma: Scalar) -> Scalar:
    _finite("normal", "mu", mu)
    _positive("normal", "sigma", sigma)
    z = ad.div(ad.sub(y, mu), sigma)
    return ad.sub(ad.sub(-0.5 * LOG_2PI, ad.log(sigma)), ad.mul(0.5, ad.mul(z, z)))


def std_normal(y: Scalar) -> Scalar:
    return ad.sub(-0.5 * LOG_2PI, ad.mul(0.5, ad.mul(y, y)))


def lognormal(y: Scalar, mu: Scalar, sigma: Scalar) -> Scalar:
    if not value_of(y) > 0.0:
        raise SupportError("lognormal", value_of(y))
    log_y = ad.log(y)
    return ad.sub(normal(log_y, mu, sigma), log_y)


def cauchy(y: Scalar, loc: Scalar, scale: Scalar) -> Scalar:
    _finite("cauchy", "loc", loc)
    _positive("cauchy", "scale", scale)
    z = ad.div(ad.sub(y, loc), scale)
    return ad.sub(ad.sub(-LOG_PI, ad.log(scale)), ad.log1p(ad.mul(z, z)))


def uniform(y: Scalar, lb: Scalar, ub: Scalar) -> Scalar:
    lo, hi = value_of(lb), value_of(ub)
    if not lo < hi:
        raise ParameterDomainError("uniform", "ub", hi)
    if not lo <= value_of(y) <= hi:
        raise SupportError("uniform", value_of(y))
    return ad.neg(ad.log(ad.sub(ub, lb)))


def gamma(y: Scalar, shape: Scalar, rate: Scalar) -> Scalar:
    """Gamma with shape ``a`` and rate ``b``: mean a / b."""
    _positive("gamma", "shape", shape)
    _positive("gamma", "rate", rate)
    if not value_of(y) > 0.0:
        raise SupportError("gamma", value_of(y))
    return ad.sum_all([
        ad.mul(shape, ad.log(rate)),
        ad.neg(ad.lgamma(shape)),
        ad.mul(ad.sub(shape, 1.0), ad.log(y)),
        ad.neg(ad.mul(rate, y)),
    ])


def inv_gamma(y: Scalar, shape: Scalar, scale: Scalar) -> Scalar:
    _positive("inv_gamma", "shape", shape)
    _positive("inv_gamma", "scale", scale)
    if not value_of(y) > 0.0:
        raise SupportError("inv_gamma", value_of(y))
    return ad.sum_all([
        ad.mul(shape, ad.log(scale)),
        ad.neg(ad.lgamma(shape)),
        ad.neg(ad.mul(ad.add(shape, 1.0), ad.log(y))),
        ad.neg(ad.div(scale, y)),
    ])


def exponential(y: Scalar, rate: Scalar) -> Scalar:
    _positive("exponential", "rate", rate)
    if value_of(y) < 0.0:
        raise SupportError("exponential", value_of(y))
    return ad.sub(ad.log(rate), ad.mul(rate, y))


def weibull(y: Scalar, shape: Scalar, scale: Scalar) -> Scalar:
    """Weibull with shape ``k`` and scale ``lambda``."""
    _positive("weibull", "shape", shape)
    _positive("weibull", "scale", scale)
    if not value_of(y) > 0.0:
        raise SupportError("weibull", value_of(y))
    log_ratio = ad.sub(ad.log(y), ad.log(scale))
    return ad.sum_all([
        ad.log(shape),
        ad.neg(ad.log(scale)),
        ad.mul(ad.sub(shape, 1.0), log_ratio),
        ad.neg(ad.exp(ad.mul(shape, log_ratio))),
    ])


def dirichlet(x: Sequence[Scalar], alpha: Sequence[Scalar]) -> Scalar:
    if len(x) != len(alpha):
        raise ParameterDomainError("dirichlet", "alpha", f"length {len(alpha)} for {len(x)} values")
    for i, a in enumerate(alpha):
        _positive("dirichlet", f"alpha[{i}]", a)
    values = [value_of(v) for v in x]
    if any(not v > 0.0 for v in values) or abs(sum(values) - 1.0) > SIMPLEX_TOLERANCE:
        raise SupportError("dirichlet", values)
    terms = [ad.lgamma(ad.sum_all(alpha))]
    for xi, ai in zip(x, alpha):
        terms.append(ad.neg(ad.lgamma(ai)))
        terms.append(ad.mul(ad.sub(ai, 1.0), ad.log(xi)))
    return ad.sum_all(terms)


def symmetric_dirichlet(x: Sequence[Scalar], alpha: float) -> Scalar:
    """Dirichlet with every concentration equal to a constant ``alpha``."""
    _positive("dirichlet", "alpha", alpha)
    values = [value_of(v) for v in x]
    if any(not v > 0.0 for v in values) or abs(sum(values) - 1.0) > SIMPLEX_TOLERANCE:
        raise SupportError("dirichlet", values)
    k = len(x)
    const = math.lgamma(k * alpha) - k * math.lgamma(alpha)
    return ad.add(const, ad.dot([alpha - 1.0] * k, [ad.log(xi) for xi in x]))


def poisson(x, rate: Scalar) -> Scalar:
    """Poisson log mass with a plain rate."""
    n = _count("poisson", x)
    _positive("poisson", "rate", rate)
    return ad.sub(ad.sub(ad.mul(n, ad.log(rate)), rate), math.lgamma(n + 1.0))


def poisson_log(x, log_rate: Scalar) -> Scalar:
    """Poisson log mass parameterized by the log rate."""
    n = _count("poisson_log", x)
    _finite("poisson_log", "log_rate", log_rate)
    return ad.sub(ad.sub(ad.mul(n, log_rate), ad.exp(log_rate)), math.lgamma(n + 1.0))


def bernoulli_logit(y, logit: Scalar) -> Scalar:
    """Bernoulli log mass with success probability ``logistic(logit)``."""
    v = value_of(y)
    if v == 1:
        return ad.neg(ad.softplus(ad.neg(logit)))
    if v == 0:
        return ad.neg(ad.softplus(logit))
    raise SupportError("bernoulli_logit", v)


def multi_normal_cholesky(y: Sequence[Scalar], mu: Sequence[Scalar], chol: np.ndarray) -> Scalar:
    """Multivariate normal with a constant lower-triangular covariance factor."""
    chol = np.asarray(chol, dtype=float)
    k = len(y)
    if chol.shape != (k, k) or len(mu) != k:
        raise ParameterDomainError("multi_normal_cholesky", "shape", chol.shape)
    diag = np.diag(chol)
    if np.any(diag <= 0.0):
        raise ParameterDomainError("multi_normal_cholesky", "chol", diag.tolist())
    residual = [ad.sub(yi, mi) for yi, mi in zip(y, mu)]
    # forward substitution L z = residual
    z = []
    for i in range(k):
        acc = residual[i]
        if i:
            acc = ad.sub(acc, ad.dot(chol[i, :i], z))
        z.append(ad.div(acc, diag[i]))
    quad = ad.sum_all([ad.mul(zi, zi) for zi in z])
    const = -0.5 * k * LOG_2PI - float(np.sum(np.log(diag)))
    return ad.sub(const, ad.mul(0.5, quad))


class Distribution(str, Enum):
    NORMAL = "normal"
    LOGNORMAL = "lognormal"
    CAUCHY = "cauchy"
    UNIFORM = "uniform"
    GAMMA = "gamma"
    INV_GAMMA = "inv_gamma"
    EXPONENTIAL = "exponential"
    WEIBULL = "weibull"
    DIRICHLET = "dirichlet"
    POISSON = "poisson"
    POISSON_LOG = "poisson_log"
    BERNOULLI_LOGIT = "bernoulli_logit"
    MULTI_NORMAL_CHOLESKY = "multi_normal_cholesky"


CATALOG: Dict[Distribution, Callable[..., Scalar]] = {
    Distribution.NORMAL: normal,
    Distribution.LOGNORMAL: lognormal,
    Distribution.CAUCHY: cauchy,
    Distribution.UNIFORM: uniform,
    Distribution.GAMMA: gamma,
    Distribution.INV_GAMMA: inv_gamma,
    Distribution.EXPONENTIAL: exponential,
    Distribution.WEIBULL: weibull,
    Distribution.DIRICHLET: dirichlet,
    Distribution.POISSON: poisson,
    Distribution.POISSON_LOG: poisson_log,
    Distribution.BERNOULLI_LOGIT: bernoulli_logit,
    Distribution.MULTI_NORMAL_CHOLESKY: multi_normal_cholesky,
}


def log_density(dist, value, *params, **named_params) -> Scalar:
    """Dispatch by distribution name, e.g. ``log_density("gamma", 1.0, shape=10, rate=10)``."""
    return CATALOG[Distribution(dist)](value, *params, **named_params)
