"""Gaussian variational families on the unconstrained space and their gradient estimators."""
from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from . import autodiff as ad
from .autodiff import Scalar, Tape, value_of
from .exceptions import (
    ConstraintError,
    DegenerateCovarianceError,
    DivergedError,
    ModelEvaluationError,
    NonFiniteValueError,
)
from .transforms import ClampCounter, TransformSet
from ..utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
DEGENERATE_DIAGONAL = 1e-12


class Family(str, Enum):
    MEANFIELD = "meanfield"
    FULLRANK = "fullrank"


class LogJointModel(Protocol):
    """Anything exposing a pure log joint over constrained block values."""

    def log_joint(self, values: Dict[str, Any], likelihood_scale: float = 1.0) -> Scalar: ...


@dataclass
class MeanFieldParams:
    """Factorized Gaussian: ``zeta_k ~ N(mu_k, exp(omega_k)^2)``."""

    mu: np.ndarray
    omega: np.ndarray

    family = Family.MEANFIELD

    def __post_init__(self) -> None:
        self.mu = np.array(self.mu, dtype=float).ravel()
        self.omega = np.array(self.omega, dtype=float).ravel()
        if self.mu.shape != self.omega.shape:
            raise ValueError(f"mu has {self.mu.size} entries but omega has {self.omega.size}")

    @classmethod
    def zeros(cls, dim: int) -> "MeanFieldParams":
        return cls(np.zeros(dim), np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.mu.size

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.omega)

    def transform_noise(self, eta: np.ndarray) -> np.ndarray:
        return self.mu + self.sigma * eta

    def standardize(self, zeta: np.ndarray) -> np.ndarray:
        return (np.asarray(zeta, dtype=float) - self.mu) / self.sigma

    def log_density(self, zeta: np.ndarray) -> float:
        eta = self.standardize(zeta)
        return float(-0.5 * self.dim * LOG_2PI - np.sum(self.omega) - 0.5 * np.dot(eta, eta))

    def entropy(self) -> float:
        return float(0.5 * self.dim * (1.0 + LOG_2PI) + np.sum(self.omega))

    def covariance(self) -> np.ndarray:
        return np.diag(np.exp(2.0 * self.omega))

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.mu, self.omega])

    @classmethod
    def unflatten(cls, dim: int, values: Sequence[float]) -> "MeanFieldParams":
        values = np.asarray(values, dtype=float)
        if values.size != 2 * dim:
            raise ValueError(f"expected {2 * dim} values, got {values.size}")
        return cls(values[:dim], values[dim:])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.omega)))

    def copy(self) -> "MeanFieldParams":
        return MeanFieldParams(self.mu.copy(), self.omega.copy())


@dataclass
class FullRankParams:
    """Gaussian with covariance ``L L^T``; ``L`` lower triangular, diagonal of either sign."""

    mu: np.ndarray
    L: np.ndarray

    family = Family.FULLRANK

    def __post_init__(self) -> None:
        self.mu = np.array(self.mu, dtype=float).ravel()
        self.L = np.tril(np.array(self.L, dtype=float))
        k = self.mu.size
        if self.L.shape != (k, k):
            raise ValueError(f"L must be {k}x{k}, got {self.L.shape}")

    @classmethod
    def identity(cls, dim: int) -> "FullRankParams":
        return cls(np.zeros(dim), np.eye(dim))

    @property
    def dim(self) -> int:
        return self.mu.size

    def check_degenerate(self) -> None:
        diag = np.abs(np.diag(self.L))
        if np.any(diag < DEGENERATE_DIAGONAL):
            k = int(np.argmin(diag))
            raise DegenerateCovarianceError(f"|L[{k},{k}]| = {diag[k]:.3e} is below {DEGENERATE_DIAGONAL:g}")

    def transform_noise(self, eta: np.ndarray) -> np.ndarray:
        return self.mu + self.L @ eta

    def standardize(self, zeta: np.ndarray) -> np.ndarray:
        self.check_degenerate()
        return linalg.solve_triangular(self.L, np.asarray(zeta, dtype=float) - self.mu, lower=True)

    def log_density(self, zeta: np.ndarray) -> float:
        eta = self.standardize(zeta)
        log_det = np.sum(np.log(np.abs(np.diag(self.L))))
        return float(-0.5 * self.dim * LOG_2PI - log_det - 0.5 * np.dot(eta, eta))

    def entropy(self) -> float:
        self.check_degenerate()
        return float(0.5 * self.dim * (1.0 + LOG_2PI) + np.sum(np.log(np.abs(np.diag(self.L)))))

    def inverse_transpose(self) -> np.ndarray:
        """``(L^-1)^T`` by back-substitution."""
        self.check_degenerate()
        return linalg.solve_triangular(self.L, np.eye(self.dim), lower=True).T

    def covariance(self) -> np.ndarray:
        return self.L @ self.L.T

    def flatten(self) -> np.ndarray:
        rows, cols = np.tril_indices(self.dim)
        return np.concatenate([self.mu, self.L[rows, cols]])

    @classmethod
    def unflatten(cls, dim: int, values: Sequence[float]) -> "FullRankParams":
        values = np.asarray(values, dtype=float)
        n_tril = dim * (dim + 1) // 2
        if values.size != dim + n_tril:
            raise ValueError(f"expected {dim + n_tril} values, got {values.size}")
        L = np.zeros((dim, dim))
        L[np.tril_indices(dim)] = values[dim:]
        return cls(values[:dim], L)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.L)))

    def copy(self) -> "FullRankParams":
        return FullRankParams(self.mu.copy(), self.L.copy())


VariationalParams = Union[MeanFieldParams, FullRankParams]


def init_params(family: Union[str, Family], dim: int, rng: Optional[np.random.Generator] = None,
                init_radius: float = 0.0) -> VariationalParams:
    """Zero mean with unit scale, or a mean drawn uniformly from (-r, r)."""
    family = Family(family)
    params = MeanFieldParams.zeros(dim) if family == Family.MEANFIELD else FullRankParams.identity(dim)
    if init_radius > 0.0:
        if rng is None:
            raise ValueError("init_radius > 0 needs a random generator")
        params.mu = rng.uniform(-init_radius, init_radius, size=dim)
    return params


@dataclass
class StandardizedDraw:
    eta: np.ndarray
    zeta: np.ndarray
    theta: Optional[np.ndarray] = None
    log_abs_det_jac_inv: Optional[float] = None


def sample(params: VariationalParams, eta: Sequence[float],
           transforms: Optional[TransformSet] = None) -> StandardizedDraw:
    """Map standard normal noise to a draw from q, and through T^-1 when transforms are given."""
    eta = np.asarray(eta, dtype=float)
    if eta.size != params.dim:
        raise ValueError(f"eta has {eta.size} entries, expected {params.dim}")
    zeta = params.transform_noise(eta)
    draw = StandardizedDraw(eta=eta, zeta=zeta)
    if transforms is not None:
        point = transforms.inverse(zeta)
        draw.theta = point.theta
        draw.log_abs_det_jac_inv = point.log_abs_det_jac_inv
    return draw


def standardize(params: VariationalParams, zeta: Sequence[float]) -> np.ndarray:
    return params.standardize(np.asarray(zeta, dtype=float))


def log_q(params: VariationalParams, zeta: Sequence[float]) -> float:
    return params.log_density(np.asarray(zeta, dtype=float))


def entropy(params: VariationalParams) -> float:
    return params.entropy()


@dataclass
class GradientEstimate:
    """Monte Carlo gradient of the ELBO with respect to the variational parameters."""

    grad_mu: np.ndarray
    elbo_estimate: float
    samples_used: int
    grad_omega: Optional[np.ndarray] = None
    grad_L: Optional[np.ndarray] = None
    discarded: int = 0
    clamped: int = 0
    per_sample: Optional[np.ndarray] = field(default=None, repr=False)
    # ELBO over the original M draws; -inf when any of them could not be evaluated
    raw_elbo_estimate: Optional[float] = None

    def __post_init__(self) -> None:
        if self.raw_elbo_estimate is None:
            self.raw_elbo_estimate = self.elbo_estimate

    def flatten(self) -> np.ndarray:
        """Gradient laid out like ``params.flatten()``."""
        if self.grad_L is not None:
            rows, cols = np.tril_indices(self.grad_mu.size)
            return np.concatenate([self.grad_mu, self.grad_L[rows, cols]])
        return np.concatenate([self.grad_mu, self.grad_omega])


def log_joint_value(model: LogJointModel, transforms: TransformSet, zeta: Sequence[float],
                    likelihood_scale: float = 1.0, clamps: Optional[ClampCounter] = None) -> float:
    """``log p(x, T^-1(zeta)) + log |det J_{T^-1}(zeta)|`` without building a tape."""
    values, log_jac = transforms.inverse_vars([float(z) for z in zeta], clamps)
    total = value_of(model.log_joint(values, likelihood_scale)) + value_of(log_jac)
    if not math.isfinite(total):
        raise NonFiniteValueError("log_joint", -1, total)
    return total


def log_joint_grad(model: LogJointModel, transforms: TransformSet, zeta: Sequence[float],
                   likelihood_scale: float = 1.0,
                   clamps: Optional[ClampCounter] = None) -> Tuple[float, np.ndarray]:
    """Value and gradient in zeta of the transformed log joint, via one tape."""
    tape = Tape()
    inputs = tape.variables(zeta)
    values, log_jac = transforms.inverse_vars(inputs, clamps)
    total = ad.add(model.log_joint(values, likelihood_scale), log_jac)
    grad = ad.gradient(tape, total, inputs)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteValueError("gradient", len(tape), float("nan"), "non-finite gradient")
    return value_of(total), grad


def _evaluate_slot(model, transforms, zeta, likelihood_scale, with_grad):
    clamps = ClampCounter()
    try:
        if with_grad:
            value, grad = log_joint_grad(model, transforms, zeta, likelihood_scale, clamps)
        else:
            value, grad = log_joint_value(model, transforms, zeta, likelihood_scale, clamps), None
    except (ModelEvaluationError, OverflowError, ZeroDivisionError) as e:
        return None, e, clamps.count
    return (value, grad), None, clamps.count


class _SlotRunner:
    """Evaluates M draws, in parallel when an executor is given, then redraws failures in order."""

    def __init__(self, model, transforms, params, likelihood_scale, rng, max_redraws, executor, with_grad):
        self.model = model
        self.transforms = transforms
        self.params = params
        self.likelihood_scale = likelihood_scale
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.max_redraws = max_redraws
        self.executor = executor
        self.with_grad = with_grad
        self.discarded = 0
        self.clamped = 0
        self.initial_failures = 0

    def _one(self, zeta):
        return _evaluate_slot(self.model, self.transforms, zeta, self.likelihood_scale, self.with_grad)

    def run(self, noise: np.ndarray, to_zeta) -> List[Tuple[np.ndarray, np.ndarray, Tuple]]:
        zetas = [to_zeta(n) for n in noise]
        if self.executor is not None and len(zetas) > 1:
            outcomes = list(self.executor.map(self._one, zetas))
        else:
            outcomes = [self._one(z) for z in zetas]

        survivors = []
        for m, (result, error, clamps) in enumerate(outcomes):
            self.clamped += clamps
            current = noise[m]
            attempts = 0
            if result is None:
                self.initial_failures += 1
            while result is None:
                self.discarded += 1
                logger.debug("Discarding Monte Carlo draw", extra={"slot": m, "error": str(error)})
                if attempts >= self.max_redraws:
                    break
                attempts += 1
                current = self.rng.standard_normal(self.params.dim)
                result, error, clamps = self._one(to_zeta(current))
                self.clamped += clamps
            if result is not None:
                survivors.append((current, to_zeta(current), result))
        if not survivors:
            raise DivergedError(
                f"all {len(noise)} Monte Carlo draws failed after {self.max_redraws} redraws each"
            )
        return survivors


def advi_gradient(
    model: LogJointModel,
    transforms: TransformSet,
    params: VariationalParams,
    eta_batch: np.ndarray,
    likelihood_scale: float = 1.0,
    *,
    rng: Optional[np.random.Generator] = None,
    max_redraws: int = 8,
    executor: Optional[Executor] = None,
) -> GradientEstimate:
    """Reparameterization gradient of the ELBO.

    ``eta_batch`` holds M standard normal vectors. Draws whose log joint or
    gradient is non-finite are redrawn from ``rng`` up to ``max_redraws``
    times; a draw that never succeeds is dropped.
    """
    eta_batch = np.atleast_2d(np.asarray(eta_batch, dtype=float))
    if eta_batch.shape[0] < 1 or eta_batch.shape[1] != params.dim:
        raise ValueError(f"eta_batch must be M x {params.dim}, got {eta_batch.shape}")
    if params.family == Family.FULLRANK:
        params.check_degenerate()

    runner = _SlotRunner(model, transforms, params, likelihood_scale, rng, max_redraws, executor, True)
    survivors = runner.run(eta_batch, params.transform_noise)
    etas = np.array([s[0] for s in survivors])
    values = np.array([s[2][0] for s in survivors])
    grads = np.array([s[2][1] for s in survivors])
    m = len(survivors)

    grad_mu = grads.sum(axis=0) / m
    estimate = GradientEstimate(
        grad_mu=grad_mu,
        elbo_estimate=float(values.sum() / m + params.entropy()),
        samples_used=m,
        discarded=runner.discarded,
        clamped=runner.clamped,
        per_sample=grads,
        raw_elbo_estimate=-math.inf if runner.initial_failures else None,
    )
    if params.family == Family.MEANFIELD:
        estimate.grad_omega = (grads * etas).sum(axis=0) / m * params.sigma + 1.0
    else:
        outer = np.einsum("mi,mj->ij", grads, etas) / m
        estimate.grad_L = np.tril(outer + params.inverse_transpose())
    return estimate


def bbvi_gradient(
    model: LogJointModel,
    transforms: TransformSet,
    params: MeanFieldParams,
    zeta_batch: np.ndarray,
    likelihood_scale: float = 1.0,
    *,
    rng: Optional[np.random.Generator] = None,
    max_redraws: int = 8,
    executor: Optional[Executor] = None,
) -> GradientEstimate:
    """Score-function gradient of the ELBO (no control variates, no model gradient)."""
    if params.family != Family.MEANFIELD:
        raise ValueError("the score-function estimator is implemented for the mean-field family only")
    zeta_batch = np.atleast_2d(np.asarray(zeta_batch, dtype=float))
    if zeta_batch.shape[0] < 1 or zeta_batch.shape[1] != params.dim:
        raise ValueError(f"zeta_batch must be M x {params.dim}, got {zeta_batch.shape}")

    runner = _SlotRunner(model, transforms, params, likelihood_scale, rng, max_redraws, executor, False)
    # the runner redraws in noise space, so hand it standardized draws
    survivors = runner.run((zeta_batch - params.mu) / params.sigma, params.transform_noise)
    m = len(survivors)
    sigma = params.sigma
    f = np.empty(m)
    score_mu = np.empty((m, params.dim))
    score_omega = np.empty((m, params.dim))
    for i, (eta, zeta, (value, _)) in enumerate(survivors):
        f[i] = value - params.log_density(zeta)
        score_mu[i] = eta / sigma
        score_omega[i] = eta * eta - 1.0
    grads = score_mu * f[:, None]
    return GradientEstimate(
        grad_mu=grads.sum(axis=0) / m,
        grad_omega=(score_omega * f[:, None]).sum(axis=0) / m,
        elbo_estimate=float(f.sum() / m),
        samples_used=m,
        discarded=runner.discarded,
        clamped=runner.clamped,
        per_sample=grads,
        raw_elbo_estimate=-math.inf if runner.initial_failures else None,
    )


def estimate_elbo(
    model: LogJointModel,
    transforms: TransformSet,
    params: VariationalParams,
    eta_batch: np.ndarray,
    likelihood_scale: float = 1.0,
) -> float:
    """Monte Carlo ELBO on fixed noise; draws that fail are skipped, -inf if all fail."""
    eta_batch = np.atleast_2d(np.asarray(eta_batch, dtype=float))
    total = 0.0
    used = 0
    for eta in eta_batch:
        try:
            total += log_joint_value(model, transforms, params.transform_noise(eta), likelihood_scale)
        except (ModelEvaluationError, OverflowError, ZeroDivisionError):
            continue
        used += 1
    if used == 0:
        return -math.inf
    return total / used + params.entropy()


def implicit_constrained_density(params: VariationalParams, transforms: TransformSet,
                                 theta: Union[Dict[str, Any], Sequence[float]]) -> float:
    """Log density of q pushed through T^-1, evaluated at a constrained point."""
    try:
        zeta = transforms.forward(theta)
    except ConstraintError:
        return -math.inf
    point = transforms.inverse(zeta)
    return params.log_density(zeta) - point.log_abs_det_jac_inv
