"""Command-line argument definitions and parsing into manifests."""
from __future__ import annotations

import argparse
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from ..core.exceptions import InvalidConfigError
from ..evaluation.variance import ESTIMATORS, FIXTURES
from .manifest import RunManifest

EVAL_KINDS = ("predictive", "kl_study", "variance_study", "covariance")


class ArgumentParser(argparse.ArgumentParser):
    """Raises instead of exiting so bad flags map to the invalid-manifest exit code."""

    def error(self, message: str):
        raise InvalidConfigError(f"{self.prog}: {message}")


def _eta(value: str):
    if value == "auto":
        return value
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a number, got {value!r}") from None


def _int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from None


def _key_value(value: str):
    if "=" not in value:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {value!r}")
    key, raw = value.split("=", 1)
    try:
        parsed: Any = json.loads(raw)
    except json.JSONDecodeError:
        parsed = raw
    return key, parsed


def _fit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("model", help="Registered model name (see the 'models' command)")
    parser.add_argument("--data", type=Path, help="JSON data file")
    parser.add_argument("--family", choices=["meanfield", "fullrank"], default="meanfield")
    parser.add_argument("--grad-samples", type=int, default=1, help="Monte Carlo draws per gradient (M)")
    parser.add_argument("--eta", type=_eta, default="auto", help="Step-size scale, or 'auto' to search")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--minibatch", type=int, default=0, help="Observations per iteration (0 = all)")
    parser.add_argument("--max-iters", type=int, default=10_000)
    parser.add_argument("--tol", type=float, default=0.01, help="Relative ELBO change for convergence")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for Monte Carlo draws")
    parser.add_argument("--draws", type=int, default=None, help="Posterior draws written or used (S)")
    parser.add_argument("--positive-transform", choices=["log", "softplus"], default="log")
    parser.add_argument("--no-wallclock", action="store_true",
                        help="Write elapsed_seconds as 0 so diagnostic files are reproducible")
    parser.add_argument("--model-option", type=_key_value, action="append", default=[], metavar="KEY=VALUE",
                        help="Model factory option, value parsed as JSON (repeatable)")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="advi", description="Automatic differentiation variational inference")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    parser.add_argument("--quiet", action="store_true", help="Do not print the start-up banner")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    fit = commands.add_parser("fit", help="Fit a model and write posterior draws")
    _fit_flags(fit)
    fit.add_argument("--output", type=Path, default=Path("output_advi.csv"), help="Samples CSV")
    fit.add_argument("--diagnostic", type=Path, default=Path("elbo_advi.csv"), help="ELBO trace CSV")

    evaluate = commands.add_parser("eval", help="Run an evaluation study")
    studies = evaluate.add_subparsers(dest="kind", required=True, parser_class=ArgumentParser)

    predictive = studies.add_parser("predictive", help="Held-out predictive log-likelihood")
    _fit_flags(predictive)
    predictive.add_argument("--held-out", type=Path, required=True, help="JSON held-out data")
    predictive.add_argument("--samples", type=Path, help="Samples CSV from a previous fit (else fit inline)")
    predictive.add_argument("--output", type=Path, default=Path("predictive.csv"))

    covariance = studies.add_parser("covariance", help="Empirical posterior covariance")
    _fit_flags(covariance)
    covariance.add_argument("--samples", type=Path, help="Samples CSV from a previous fit (else fit inline)")
    covariance.add_argument("--coordinates", help="Comma-separated parameter names (default: all)")
    covariance.add_argument("--unconstrained", action="store_true",
                            help="Use unconstrained coordinates (needs an inline fit)")
    covariance.add_argument("--output", type=Path, default=Path("covariance.csv"))

    kl = studies.add_parser("kl_study", help="KL to Gamma targets under the log and softplus transforms")
    kl.add_argument("--seed", type=int, default=0)
    kl.add_argument("--grad-samples", type=int, default=100)
    kl.add_argument("--max-iters", type=int, default=2000)
    kl.add_argument("--output", type=Path, default=Path("kl_study.csv"))

    variance = studies.add_parser("variance_study", help="Gradient estimator variance against M")
    variance.add_argument("--fixture", choices=FIXTURES, default="gamma_10_10")
    variance.add_argument("--estimators", default=",".join(ESTIMATORS))
    variance.add_argument("--grad-samples", type=_int_list, default=[1, 10, 100])
    variance.add_argument("--replications", type=int, default=10_000)
    variance.add_argument("--seed", type=int, default=0)
    variance.add_argument("--output", type=Path, default=Path("variance_study.csv"))

    simulate = commands.add_parser("simulate", help="Write a simulated dataset for a model")
    simulate.add_argument("model")
    simulate.add_argument("--output", type=Path, required=True)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--model-option", type=_key_value, action="append", default=[], metavar="KEY=VALUE")
    simulate.add_argument("--sim-option", type=_key_value, action="append", default=[], metavar="KEY=VALUE",
                          help="Simulator option such as n=200 (repeatable)")

    commands.add_parser("models", help="List the available models and their data fields")
    return parser


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def manifest_from_args(args: argparse.Namespace) -> RunManifest:
    """Collect the fit-related flags into a validated manifest."""
    fields: Dict[str, Any] = {
        "model": args.model,
        "data": args.data,
        "family": args.family,
        "grad_samples": args.grad_samples,
        "eta": args.eta,
        "seed": args.seed,
        "minibatch": args.minibatch,
        "max_iters": args.max_iters,
        "tol": args.tol,
        "positive_transform": args.positive_transform,
        "wallclock": not args.no_wallclock,
        "options": dict(args.model_option),
        "output": getattr(args, "output", None),
        "diagnostic": getattr(args, "diagnostic", None),
    }
    if args.threads is not None:
        fields["threads"] = args.threads
    if args.draws is not None:
        fields["draws"] = args.draws
    return RunManifest(**fields)
