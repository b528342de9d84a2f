"""Executes parsed commands and maps failures to exit codes."""
from __future__ import annotations

import argparse
import time
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from ..core.exceptions import (
    ADVIError,
    ConstraintError,
    DegenerateCovarianceError,
    DivergedError,
    InvalidConfigError,
    ModelEvaluationError,
    OutputPathError,
    SchemaError,
    UnknownModelError,
)
from ..core.optimizer import FitResult, Termination, fit
from ..core.transforms import TransformSet
from ..evaluation import divergence, posterior, variance
from ..models import registry
from ..models.base import DatasetHandle, ModelDefinition
from ..utils.log_manager import log_manager
from . import io
from .manifest import ExitCode, RunManifest, ensure_writable
from .router import manifest_from_args

logger = log_manager.get_logger(__name__)

ERROR_CODES: Tuple[Tuple[type, ExitCode], ...] = (
    (UnknownModelError, ExitCode.UNKNOWN_MODEL),
    (SchemaError, ExitCode.SCHEMA),
    (OutputPathError, ExitCode.OUTPUT_PATH),
    (InvalidConfigError, ExitCode.INVALID_MANIFEST),
    (ValidationError, ExitCode.INVALID_MANIFEST),
    (ConstraintError, ExitCode.SCHEMA),
    (DivergedError, ExitCode.DIVERGED),
    (DegenerateCovarianceError, ExitCode.DIVERGED),
    (ModelEvaluationError, ExitCode.DIVERGED),
    (ADVIError, ExitCode.ERROR),
)


def exit_code_for(error: BaseException) -> ExitCode:
    for kind, code in ERROR_CODES:
        if isinstance(error, kind):
            return code
    return ExitCode.ERROR


def one_line(error: BaseException) -> str:
    if isinstance(error, ValidationError):
        first = error.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ())) or "manifest"
        return f"invalid {where}: {first.get('msg', 'invalid value')}"
    return str(error).splitlines()[0] if str(error) else type(error).__name__


class CommandHandler:
    """Runs one command and reports it through the log manager."""

    def __init__(self, echo: Callable[[str], None] = print):
        self.echo = echo
        self.handlers: Dict[str, Callable[[argparse.Namespace], ExitCode]] = {
            "fit": self.handle_fit,
            "eval": self.handle_eval,
            "simulate": self.handle_simulate,
            "models": self.handle_models,
        }

    def run(self, args: argparse.Namespace) -> int:
        command = args.command if args.command != "eval" else f"eval {args.kind}"
        start_time = time.time()
        try:
            code = self.handlers[args.command](args)
        except (ADVIError, ValidationError) as e:
            code = exit_code_for(e)
            logger.error(f"{command}: {one_line(e)}")
            logger.debug(f"Error details: {e}", exc_info=True)
        log_manager.log_command(command, int(code), time.time() - start_time,
                                details={"model": getattr(args, "model", None)})
        return int(code)

    # shared steps

    def _load(self, manifest: RunManifest) -> Tuple[ModelDefinition, DatasetHandle]:
        model = registry.build(manifest.model, **manifest.options)
        raw = io.load_data(manifest.data) if manifest.data is not None else {}
        if manifest.data is None and model.data_schema:
            logger.info(f"No data given for {model.name}; fitting the prior")
            raw = {f.name: [] for f in model.data_schema}
        data = model.validate(raw)
        try:
            model.parameter_blocks(data)
        except KeyError as e:
            raise SchemaError(str(e.args[0]), "dimension cannot be inferred without data") from None
        return model, data

    def _fit(self, model: ModelDefinition, data: DatasetHandle, manifest: RunManifest) -> FitResult:
        result = fit(model, data, manifest.fit_config())
        if result.termination == Termination.DIVERGED:
            raise DivergedError(result.diagnostics.message or "optimization diverged")
        return result

    def _draw(self, result: FitResult, manifest: RunManifest) -> posterior.PosteriorSampleSet:
        return posterior.draw_posterior(result.params, result.transforms, manifest.draws,
                                        seed=[manifest.seed, 1])

    def _samples_from_csv(self, path, transforms: TransformSet) -> posterior.PosteriorSampleSet:
        names, theta = io.read_samples(path)
        if names != transforms.flat_names():
            raise SchemaError(str(path), "columns do not match the model's parameters")
        zeta = np.array([transforms.forward(row) for row in theta]).reshape(theta.shape[0], transforms.dim)
        return posterior.PosteriorSampleSet(theta=theta, zeta=zeta, names=names,
                                            log_q=np.full(theta.shape[0], np.nan), transforms=transforms)

    # commands

    def handle_fit(self, args: argparse.Namespace) -> ExitCode:
        manifest = manifest_from_args(args)
        manifest.check_writable()
        model, data = self._load(manifest)
        result = fit(model, data, manifest.fit_config())
        if manifest.diagnostic is not None:
            io.write_diagnostics(manifest.diagnostic, result.trace, manifest.wallclock)
        if result.termination == Termination.DIVERGED:
            self.echo(f"fit diverged: {result.diagnostics.message}")
            return ExitCode.DIVERGED
        samples = self._draw(result, manifest)
        if manifest.output is not None:
            io.write_samples(manifest.output, samples.names, samples.theta)
        self.echo(f"{model.name}: {result.termination.value} after {result.diagnostics.iterations} "
                  f"iterations, ELBO {result.smoothed_elbo(manifest.fit_config().window):.6g}")
        return ExitCode.OK

    def handle_eval(self, args: argparse.Namespace) -> ExitCode:
        ensure_writable(args.output)
        if args.kind == "kl_study":
            return self._kl_study(args)
        if args.kind == "variance_study":
            return self._variance_study(args)
        manifest = manifest_from_args(args)
        model, data = self._load(manifest)
        if args.kind == "predictive":
            return self._predictive(args, manifest, model, data)
        return self._covariance(args, manifest, model, data)

    def _posterior_for(self, args, manifest, model, data) -> posterior.PosteriorSampleSet:
        transforms = model.transform_set(data, manifest.positive_transform)
        if args.samples is not None:
            return self._samples_from_csv(args.samples, transforms)
        return self._draw(self._fit(model, data, manifest), manifest)

    def _predictive(self, args, manifest, model, data) -> ExitCode:
        held_out = model.validate(io.load_data(args.held_out))
        samples = self._posterior_for(args, manifest, model, data)
        try:
            value = posterior.predictive_log_likelihood(model, held_out, samples)
        except ValueError as e:
            raise InvalidConfigError(str(e)) from e
        io.write_rows(args.output, ("model", "draws", "held_out_points", "predictive_log_likelihood"),
                      [(model.name, samples.size, held_out.n_obs, value)])
        self.echo(f"{model.name}: average held-out log predictive {value:.6g}")
        return ExitCode.OK

    def _covariance(self, args, manifest, model, data) -> ExitCode:
        if args.unconstrained and args.samples is not None:
            raise InvalidConfigError("--unconstrained needs an inline fit, not --samples")
        samples = self._posterior_for(args, manifest, model, data)
        coordinates = args.coordinates.split(",") if args.coordinates else None
        names = coordinates or (samples.transforms.unconstrained_names() if args.unconstrained else samples.names)
        try:
            cov = posterior.empirical_covariance(samples, coordinates, unconstrained=args.unconstrained)
        except ValueError as e:
            raise InvalidConfigError(str(e)) from e
        io.write_rows(args.output, ["name", *names], ([n, *row] for n, row in zip(names, cov)))
        return ExitCode.OK

    def _kl_study(self, args) -> ExitCode:
        rows = divergence.transformation_study(seed=args.seed, grad_samples=args.grad_samples,
                                               max_iters=args.max_iters)
        configs = list(dict.fromkeys((r.shape, r.rate) for r in rows))
        header = ["transform", *(f"Gamma({s:g},{r:g})" for s, r in configs)]
        grid = []
        for link in dict.fromkeys(r.link for r in rows):
            by_config = {(r.shape, r.rate): r.kl for r in rows if r.link == link}
            grid.append([link, *(by_config[c] for c in configs)])
        io.write_rows(args.output, header, grid)
        return ExitCode.OK

    def _variance_study(self, args) -> ExitCode:
        estimators = [e for e in args.estimators.split(",") if e]
        unknown = set(estimators) - set(variance.ESTIMATORS)
        if unknown:
            raise InvalidConfigError(f"unknown estimators {sorted(unknown)}")
        if args.replications < 2 or not args.grad_samples or min(args.grad_samples) < 1:
            raise InvalidConfigError("need at least two replications and positive grad-samples values")
        reports = variance.gradient_variance_study(args.fixture, estimators, args.grad_samples,
                                                   args.replications, args.seed)
        rows = (
            (r.estimator, r.grad_samples, k, r.variances[k], r.means[k], r.replications)
            for r in reports for k in range(r.variances.size)
        )
        io.write_rows(args.output, ("estimator", "grad_samples", "coordinate", "variance", "mean",
                                    "replications"), rows)
        return ExitCode.OK

    def handle_simulate(self, args: argparse.Namespace) -> ExitCode:
        ensure_writable(args.output)
        model = registry.build(args.model, **dict(args.model_option))
        try:
            raw = model.simulate_data(np.random.default_rng(args.seed), **dict(args.sim_option))
        except TypeError as e:
            raise InvalidConfigError(f"bad simulator option for {model.name}: {e}") from e
        except NotImplementedError as e:
            raise InvalidConfigError(str(e)) from e
        io.write_json(args.output, raw)
        return ExitCode.OK

    def handle_models(self, args: Optional[argparse.Namespace] = None) -> ExitCode:
        for name in registry.available():
            model = registry.build(name)
            fields = ", ".join(f.describe() for f in model.data_schema) or "no data"
            self.echo(f"{name}: {model.description}\n    data: {fields}")
        return ExitCode.OK
