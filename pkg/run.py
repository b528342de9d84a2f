#!/usr/bin/env python3
"""
ADVI Runner Script
Fits the compiled-in models with automatic differentiation variational inference.

Usage:
    python run.py [--debug] [--quiet] <command> [options]

Commands:
    fit <model>          Fit a model, write posterior draws and the ELBO trace
    eval <study> ...     predictive | covariance | kl_study | variance_study
    simulate <model>     Write a simulated JSON dataset
    models               List the available models
"""
import logging
import sys
from typing import Optional, Sequence

import settings
from src.cli import CommandHandler, ExitCode, parse_arguments
from src.core.exceptions import InvalidConfigError
from src.utils.common import setup_logging


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the ADVI command line."""
    try:
        args = parse_arguments(argv)
    except InvalidConfigError as e:
        setup_logging()
        logging.error(str(e))
        return int(ExitCode.INVALID_MANIFEST)

    if not args.quiet:
        print(settings.format_title({
            "Version": settings.VERSION,
            "Command": args.command if args.command != "eval" else f"eval {args.kind}",
            "Threads": getattr(args, "threads", None) or settings.ADVI_THREADS,
        }))

    setup_logging(debug=args.debug)
    if args.debug:
        settings.DEBUG = True

    return CommandHandler().run(args)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logging.info("Keyboard interrupt received. Shutting down...")
        sys.exit(130)
