"""Batch command-line front end: fit, eval, simulate, models."""
from .handler import CommandHandler
from .manifest import ExitCode, RunManifest
from .router import build_parser, parse_arguments


def main(argv=None) -> int:
    """Parse ``argv`` and run the command; returns the process exit status."""
    from ..core.exceptions import InvalidConfigError
    from ..utils.log_manager import log_manager

    try:
        args = parse_arguments(argv)
    except InvalidConfigError as e:
        log_manager.get_logger(__name__).error(str(e))
        return int(ExitCode.INVALID_MANIFEST)
    return CommandHandler().run(args)


__all__ = ["CommandHandler", "ExitCode", "RunManifest", "build_parser", "main", "parse_arguments"]
