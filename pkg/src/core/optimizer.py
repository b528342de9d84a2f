"""Stochastic gradient ascent on the ELBO with an adaptive step-size sequence."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, List, Literal, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

import settings
from .exceptions import DivergedError, InvalidConfigError
from .transforms import PositiveLink, TransformSet
from .variational import Family, VariationalParams, advi_gradient, init_params
from ..utils.common import Stopwatch
from ..utils.log_manager import log_manager

if TYPE_CHECKING:
    from ..models.base import BoundModel, DatasetHandle, ModelDefinition

logger = log_manager.get_logger(__name__)

ETA_CANDIDATES = (0.01, 0.1, 1.0, 10.0, 100.0)


@dataclass(frozen=True)
class StepSizeState:
    """Memory of the adaptive step-size sequence.

    ``s`` is ``None`` until the first gradient arrives; ``iteration`` is the
    index ``i`` of the next step, starting at 1.
    """

    eta_scale: float
    tau: float = 1.0
    alpha: float = 0.1
    epsilon: float = 1e-16
    s: Optional[np.ndarray] = None
    iteration: int = 1


def step_size(state: StepSizeState, grad: Sequence[float]) -> Tuple[np.ndarray, StepSizeState]:
    """Per-coordinate step sizes for the current iteration and the advanced state."""
    g2 = np.square(np.asarray(grad, dtype=float))
    if state.s is None:
        s = g2
    else:
        s = state.alpha * g2 + (1.0 - state.alpha) * state.s
    decay = state.iteration ** (-0.5 + state.epsilon)
    rho = state.eta_scale * decay / (state.tau + np.sqrt(s))
    return rho, replace(state, s=s, iteration=state.iteration + 1)


def apply_update(params: VariationalParams, rho: np.ndarray, grad: np.ndarray) -> VariationalParams:
    """``phi + rho * grad`` on the flat parameter layout."""
    flat = params.flatten() + rho * grad
    return type(params).unflatten(params.dim, flat)


class Termination(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"


class TracePoint(NamedTuple):
    iteration: int
    elapsed: float
    elbo: float


class FitConfig(BaseModel):
    """Settings for one optimization run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    family: Family = Family.MEANFIELD
    grad_samples: int = Field(1, ge=1)
    max_iters: int = Field(10_000, ge=1)
    window: int = Field(50, ge=1)
    tol_rel: float = Field(0.01, gt=0.0)
    minibatch: int = Field(0, ge=0)
    seed: int = Field(0, ge=0)
    eta_scale: Union[Literal["auto"], float] = "auto"
    eta_candidates: Tuple[float, ...] = ETA_CANDIDATES
    max_redraws: int = Field(settings.ADVI_MAX_REDRAWS, ge=0)
    adapt_iters: int = Field(200, ge=1)
    adapt_subset: int = Field(1000, ge=1)
    threads: int = Field(settings.ADVI_THREADS, ge=1)
    positive_transform: PositiveLink = PositiveLink.LOG
    init_radius: float = Field(0.0, ge=0.0)
    predictive_every: int = Field(0, ge=0)
    predictive_draws: int = Field(100, ge=1)
    log_every: int = Field(settings.ADVI_LOG_EVERY, ge=0)

    @field_validator("eta_scale")
    @classmethod
    def _positive_scale(cls, value):
        if value != "auto" and not (value > 0.0 and math.isfinite(value)):
            raise ValueError("eta_scale must be 'auto' or a positive number")
        return value

    @field_validator("eta_candidates")
    @classmethod
    def _sorted_candidates(cls, value):
        if not value or any(v <= 0.0 for v in value):
            raise ValueError("eta_candidates must be positive")
        return tuple(sorted(value))


@dataclass
class FitDiagnostics:
    iterations: int = 0
    discarded: int = 0
    clamped: int = 0
    eta_scale: float = float("nan")
    elapsed: float = 0.0
    message: str = ""


@dataclass
class FitResult:
    params: VariationalParams
    transforms: TransformSet
    trace: List[TracePoint]
    termination: Termination
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics)
    predictive_trace: List[TracePoint] = field(default_factory=list)

    @property
    def final_elbo(self) -> float:
        return self.trace[-1].elbo if self.trace else float("nan")

    def smoothed_elbo(self, window: int = 50) -> float:
        """Mean of the last ``window`` ELBO estimates."""
        if not self.trace:
            return float("nan")
        tail = [p.elbo for p in self.trace[-window:]]
        return float(np.mean(tail))


def relative_change(previous: float, current: float) -> float:
    if previous == 0.0:
        return abs(current)
    return abs(current - previous) / abs(previous)


def _check_minibatch(model: "ModelDefinition", n_obs: int, minibatch: int) -> None:
    if minibatch == 0:
        return
    if minibatch > n_obs:
        raise InvalidConfigError(f"minibatch {minibatch} exceeds the {n_obs} observations")
    if not model.supports_subsampling:
        raise InvalidConfigError(f"model '{model.name}' does not support minibatch subsampling")


def _optimize(
    bound: "BoundModel",
    transforms: TransformSet,
    config: FitConfig,
    eta_scale: float,
    rng: np.random.Generator,
    base_scale: float = 1.0,
    check_convergence: bool = True,
    held_out: Optional["DatasetHandle"] = None,
    label: str = "fit",
) -> FitResult:
    n_obs = bound.data.n_obs
    minibatch = config.minibatch if 0 < config.minibatch < n_obs else 0
    params = init_params(config.family, transforms.dim, rng, config.init_radius)
    state = StepSizeState(eta_scale=eta_scale)
    window = config.window
    diagnostics = FitDiagnostics(eta_scale=eta_scale)
    trace: List[TracePoint] = []
    predictive: List[TracePoint] = []
    elbos: List[float] = []
    non_finite_run = 0
    termination = Termination.MAX_ITERS
    stopwatch = Stopwatch()
    executor = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None

    try:
        for i in range(1, config.max_iters + 1):
            eta = rng.standard_normal((config.grad_samples, transforms.dim))
            target, scale = bound, base_scale
            if minibatch:
                idx = np.sort(rng.choice(n_obs, size=minibatch, replace=False))
                target, scale = bound.subset(idx), base_scale * n_obs / minibatch
            try:
                estimate = advi_gradient(
                    target, transforms, params, eta, scale,
                    rng=rng, max_redraws=config.max_redraws, executor=executor,
                )
            except DivergedError as e:
                diagnostics.message = str(e)
                termination = Termination.DIVERGED
                break

            diagnostics.iterations = i
            diagnostics.discarded += estimate.discarded
            diagnostics.clamped += estimate.clamped
            elbo = estimate.elbo_estimate
            trace.append(TracePoint(i, stopwatch.elapsed(), elbo))
            elbos.append(elbo)

            non_finite_run = 0 if math.isfinite(estimate.raw_elbo_estimate) else non_finite_run + 1
            if non_finite_run >= window:
                diagnostics.message = f"ELBO non-finite for {window} consecutive iterations"
                termination = Termination.DIVERGED
                break

            rho, state = step_size(state, estimate.flatten())
            params = apply_update(params, rho, estimate.flatten())
            if not params.is_finite():
                diagnostics.message = f"non-finite variational parameters at iteration {i}"
                termination = Termination.DIVERGED
                break

            if config.log_every and i % config.log_every == 0:
                logger.info(
                    f"[{label}] iteration {i}: elbo {elbo:.6g}",
                    extra={"iteration": i, "elbo": elbo, "eta_scale": eta_scale,
                           "discarded": diagnostics.discarded, "clamped": diagnostics.clamped},
                )

            if held_out is not None and config.predictive_every and i % config.predictive_every == 0:
                predictive.append(TracePoint(i, stopwatch.elapsed(), _predictive(bound, transforms, params,
                                                                                  held_out, config, i)))

            if i % window == 0:
                recent = elbos[-window:]
                if check_convergence and i >= 2 * window:
                    previous = float(np.mean(elbos[-2 * window:-window]))
                    current = float(np.mean(recent))
                    change = relative_change(previous, current)
                    logger.debug(f"[{label}] relative ELBO change {change:.3e}",
                                 extra={"iteration": i, "relative_change": change})
                    if change < config.tol_rel:
                        termination = Termination.CONVERGED
                        break
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    diagnostics.elapsed = stopwatch.elapsed()
    return FitResult(
        params=params,
        transforms=transforms,
        trace=trace,
        termination=termination,
        diagnostics=diagnostics,
        predictive_trace=predictive,
    )


def _predictive(bound, transforms, params, held_out, config, iteration) -> float:
    from ..evaluation.posterior import draw_posterior, predictive_log_likelihood

    samples = draw_posterior(params, transforms, config.predictive_draws, seed=(config.seed, 2, iteration))
    return predictive_log_likelihood(bound.definition, held_out, samples)


def _pilot_data(model: "ModelDefinition", data: "DatasetHandle", config: FitConfig,
                rng: np.random.Generator) -> Tuple["DatasetHandle", float]:
    n_obs = data.n_obs
    n_sub = min(n_obs, config.adapt_subset)
    if not model.supports_subsampling or n_sub >= n_obs:
        return data, 1.0
    idx = np.sort(rng.choice(n_obs, size=n_sub, replace=False))
    return data.subset(idx), n_obs / n_sub


def search_eta_scale(model: "ModelDefinition", data: "DatasetHandle", config: FitConfig) -> float:
    """Pick the step-size scale whose short pilot run ends with the best ELBO.

    Every candidate runs ``adapt_iters`` iterations from the same seed on the
    same data subset. The score is the mean ELBO of the last ``window``
    pilot iterations; diverged candidates are excluded and ties go to the
    smaller scale.
    """
    transforms = model.transform_set(data, config.positive_transform)
    pilot_data, base_scale = _pilot_data(model, data, config, np.random.default_rng([config.seed, 3]))
    bound = model.bind(pilot_data)
    pilot_config = config.model_copy(update={
        "max_iters": config.adapt_iters,
        "minibatch": min(config.minibatch, pilot_data.n_obs),
        "predictive_every": 0,
        "log_every": 0,
    })
    tail = min(config.window, config.adapt_iters)

    best_scale, best_score = None, -math.inf
    for candidate in config.eta_candidates:
        result = _optimize(bound, transforms, pilot_config, candidate, np.random.default_rng(config.seed),
                           base_scale=base_scale, check_convergence=False, label=f"pilot {candidate:g}")
        if result.termination == Termination.DIVERGED:
            logger.info(f"eta_scale {candidate:g} diverged during the pilot run",
                        extra={"eta_scale": candidate, "reason": result.diagnostics.message})
            continue
        score = result.smoothed_elbo(tail)
        logger.info(f"eta_scale {candidate:g}: pilot ELBO {score:.6g}",
                    extra={"eta_scale": candidate, "elbo": score})
        if math.isfinite(score) and score > best_score:
            best_scale, best_score = candidate, score

    if best_scale is None:
        raise DivergedError(f"every eta_scale candidate {list(config.eta_candidates)} diverged")
    logger.info(f"Selected eta_scale {best_scale:g}", extra={"eta_scale": best_scale, "elbo": best_score})
    return best_scale


def fit(
    model: "ModelDefinition",
    data: "DatasetHandle",
    config: Optional[FitConfig] = None,
    held_out: Optional["DatasetHandle"] = None,
) -> FitResult:
    """Fit a Gaussian approximation in the unconstrained space.

    A run that cannot continue returns a result with termination
    ``diverged`` rather than raising.
    """
    config = config or FitConfig()
    _check_minibatch(model, data.n_obs, config.minibatch)
    transforms = model.transform_set(data, config.positive_transform)

    if config.eta_scale == "auto":
        try:
            eta_scale = search_eta_scale(model, data, config)
        except DivergedError as e:
            logger.error(f"Step-size search failed: {e}")
            return FitResult(
                params=init_params(config.family, transforms.dim),
                transforms=transforms,
                trace=[],
                termination=Termination.DIVERGED,
                diagnostics=FitDiagnostics(message=str(e)),
            )
    else:
        eta_scale = float(config.eta_scale)

    logger.info(
        f"Fitting {model.name} ({config.family.value}, K={transforms.dim}, eta_scale={eta_scale:g})",
        extra={"model": model.name, "family": config.family.value, "dim": transforms.dim,
               "eta_scale": eta_scale, "seed": config.seed},
    )
    result = _optimize(model.bind(data), transforms, config, eta_scale, np.random.default_rng(config.seed),
                       held_out=held_out)
    log = logger.warning if result.termination == Termination.DIVERGED else logger.info
    log(
        f"Fit finished: {result.termination.value} after {result.diagnostics.iterations} iterations",
        extra={"termination": result.termination.value, "iterations": result.diagnostics.iterations,
               "elbo": result.final_elbo, "discarded": result.diagnostics.discarded,
               "clamped": result.diagnostics.clamped},
    )
    return result
