"""Adaptive random-walk Metropolis in the unconstrained space, used as a reference posterior."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core.exceptions import ModelEvaluationError
from ..core.transforms import TransformSet
from ..core.variational import log_joint_value
from ..models.base import BoundModel
from ..utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

TARGET_ACCEPTANCE = 0.234
ADAPT_EVERY = 500
JITTER = 1e-8


@dataclass
class MetropolisResult:
    zeta: np.ndarray
    theta: np.ndarray
    acceptance_rate: float
    proposal_scale: float

    def mean(self) -> np.ndarray:
        return self.theta.mean(axis=0)

    def sd(self) -> np.ndarray:
        return self.theta.std(axis=0, ddof=1)


def _log_target(bound: BoundModel, transforms: TransformSet, zeta: np.ndarray) -> float:
    try:
        return log_joint_value(bound, transforms, zeta)
    except (ModelEvaluationError, OverflowError, ZeroDivisionError):
        return -math.inf


def random_walk_metropolis(bound: BoundModel, transforms: TransformSet, n_steps: int, seed: int = 0,
                           init: Optional[Sequence[float]] = None, burn_in: Optional[int] = None,
                           thin: int = 1) -> MetropolisResult:
    """Gaussian random-walk Metropolis on ``log p(x, T^-1(zeta)) + log|J|``.

    During burn-in the proposal covariance is re-estimated from the chain every
    few hundred steps and its scale follows a Robbins-Monro recursion toward
    23.4% acceptance. Only post-burn-in states are kept.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    rng = np.random.default_rng(seed)
    dim = transforms.dim
    burn_in = n_steps // 5 if burn_in is None else burn_in
    x = np.zeros(dim) if init is None else np.asarray(init, dtype=float).copy()
    lp = _log_target(bound, transforms, x)
    if not math.isfinite(lp):
        raise ValueError("the chain's starting point has zero posterior density")

    log_scale = math.log(2.38 / math.sqrt(dim))
    chol = np.eye(dim) * 0.1
    history = []
    kept = []
    accepted = 0

    for step in range(burn_in + n_steps):
        proposal = x + math.exp(log_scale) * (chol @ rng.standard_normal(dim))
        lp_prop = _log_target(bound, transforms, proposal)
        accept = math.log(rng.uniform()) < lp_prop - lp
        if accept:
            x, lp = proposal, lp_prop

        if step < burn_in:
            history.append(x.copy())
            log_scale += ((1.0 if accept else 0.0) - TARGET_ACCEPTANCE) / math.sqrt(step + 1.0)
            if (step + 1) % ADAPT_EVERY == 0 and len(history) > dim + 1:
                cov = np.atleast_2d(np.cov(np.asarray(history[-5 * ADAPT_EVERY:]), rowvar=False))
                try:
                    chol = np.linalg.cholesky(cov + JITTER * np.eye(dim))
                except np.linalg.LinAlgError:
                    logger.debug("Chain covariance not positive definite; keeping the previous proposal")
            continue

        accepted += accept
        if (step - burn_in) % thin == 0:
            kept.append(x.copy())

    zeta = np.asarray(kept)
    theta = np.array([transforms.inverse(z).theta for z in zeta])
    rate = accepted / n_steps
    logger.info(f"Metropolis finished: {len(kept)} draws, acceptance {rate:.3f}",
                extra={"draws": len(kept), "acceptance": rate, "dim": dim})
    return MetropolisResult(zeta=zeta, theta=theta, acceptance_rate=rate, proposal_scale=math.exp(log_scale))
