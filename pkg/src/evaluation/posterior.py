"""Draws from a fitted approximation and the summaries computed on them."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import special

from ..core.exceptions import ModelEvaluationError
from ..core.transforms import TransformSet
from ..core.variational import VariationalParams, log_joint_value
from ..models.base import BoundModel, DatasetHandle, ModelDefinition
from ..utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

SeedLike = Union[int, Sequence[int]]


@dataclass
class PosteriorSampleSet:
    """S draws from q mapped to the constrained space.

    ``theta`` is S x (constrained dim) in the flat layout named by ``names``;
    ``zeta`` keeps the unconstrained draws. ``log_joint`` is filled only when
    a bound model was supplied to :func:`draw_posterior`.
    """

    theta: np.ndarray
    zeta: np.ndarray
    names: List[str]
    log_q: np.ndarray
    transforms: TransformSet
    log_joint: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.theta.shape[0] < 1:
            raise ValueError("a sample set needs at least one draw")

    @property
    def size(self) -> int:
        return self.theta.shape[0]

    def values(self, s: int) -> dict:
        """Per-block constrained values of draw ``s``."""
        return self.transforms.unflatten(self.theta[s])

    def column(self, name: str) -> np.ndarray:
        return self.theta[:, self.names.index(name)]

    def block_mean(self, block: str) -> np.ndarray:
        idx = [i for i, n in enumerate(self.names) if n == block or n.startswith(block + ".")]
        return self.theta[:, idx].mean(axis=0)


def draw_posterior(params: VariationalParams, transforms: TransformSet, draws: int, seed: SeedLike = 0,
                   model: Optional[BoundModel] = None) -> PosteriorSampleSet:
    """Draw ``draws`` iid samples from q and push them through T^-1."""
    if draws < 1:
        raise ValueError(f"need at least one draw, got {draws}")
    rng = np.random.default_rng(seed)
    eta = rng.standard_normal((draws, params.dim))
    zeta = np.array([params.transform_noise(e) for e in eta]).reshape(draws, params.dim)
    theta = np.empty((draws, transforms.constrained_dim))
    log_q = np.empty(draws)
    joint = np.empty(draws) if model is not None else None
    for s in range(draws):
        theta[s] = transforms.inverse(zeta[s]).theta
        log_q[s] = params.log_density(zeta[s])
        if joint is not None:
            try:
                joint[s] = log_joint_value(model, transforms, zeta[s])
            except ModelEvaluationError:
                joint[s] = -np.inf
    return PosteriorSampleSet(theta=theta, zeta=zeta, names=transforms.flat_names(), log_q=log_q,
                              transforms=transforms, log_joint=joint)


def pointwise_log_likelihood(model: ModelDefinition, held_out: DatasetHandle,
                             samples: PosteriorSampleSet) -> np.ndarray:
    """S x N matrix of log p(x_n | theta_s)."""
    if model.point_log_likelihood is None:
        raise ValueError(f"model '{model.name}' has no per-point predictive density")
    n_points = held_out.n_obs
    if n_points < 1:
        raise ValueError("held-out data has no observations")
    table = np.empty((samples.size, n_points))
    for s in range(samples.size):
        values = samples.values(s)
        for n in range(n_points):
            table[s, n] = model.point_log_likelihood(values, held_out, n)
    return table


def predictive_log_likelihood(model: ModelDefinition, held_out: DatasetHandle,
                              samples: PosteriorSampleSet) -> float:
    """Average over held-out points of log (1/S) sum_s p(x_n | theta_s)."""
    table = pointwise_log_likelihood(model, held_out, samples)
    per_point = special.logsumexp(table, axis=0) - np.log(samples.size)
    return float(np.mean(per_point))


def _select(samples: PosteriorSampleSet, coordinates, unconstrained: bool) -> np.ndarray:
    matrix = samples.zeta if unconstrained else samples.theta
    if coordinates is None:
        return matrix
    names = samples.transforms.unconstrained_names() if unconstrained else samples.names
    idx = [names.index(c) if isinstance(c, str) else int(c) for c in coordinates]
    return matrix[:, idx]


def empirical_covariance(samples: PosteriorSampleSet, coordinates: Optional[Sequence] = None,
                         unconstrained: bool = False) -> np.ndarray:
    """Unbiased sample covariance (divisor S - 1) of the chosen coordinates."""
    if samples.size < 2:
        raise ValueError("covariance needs at least two draws")
    matrix = _select(samples, coordinates, unconstrained)
    return np.atleast_2d(np.cov(matrix, rowvar=False, ddof=1))


def marginal_variance_ratio(samples_or_cov: Union[PosteriorSampleSet, np.ndarray],
                            oracle_cov: np.ndarray, coordinates: Optional[Sequence] = None) -> np.ndarray:
    """Approximate marginal variances divided by reference ones; below 1 means underestimation."""
    if isinstance(samples_or_cov, PosteriorSampleSet):
        cov = empirical_covariance(samples_or_cov, coordinates)
    else:
        cov = np.atleast_2d(samples_or_cov)
    return np.diag(cov) / np.diag(np.atleast_2d(oracle_cov))


def correlation_from_covariance(cov: np.ndarray) -> np.ndarray:
    sd = np.sqrt(np.diag(cov))
    return cov / np.outer(sd, sd)


def retained_dimensions(alpha_means: Sequence[float], factor: float = 10.0) -> List[int]:
    """Indices m whose ARD precision mean is below ``factor`` times the smallest one."""
    alpha = np.asarray(alpha_means, dtype=float)
    if alpha.size == 0:
        return []
    threshold = factor * alpha.min()
    return [int(m) for m in np.flatnonzero(alpha < threshold)]
