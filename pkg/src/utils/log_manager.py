"""Centralized logging configuration and management."""
import logging
import logging.handlers
from pathlib import Path
from typing import Optional, Dict, Any

from pythonjsonlogger import jsonlogger

import settings


class ConsoleFormatter(logging.Formatter):
    """Custom formatter for console output with colors."""

    grey = "\x1b[38;20m"
    yellow = "\x1b[33;20m"
    red = "\x1b[31;20m"
    bold_red = "\x1b[31;1m"
    reset = "\x1b[0m"

    FORMATS = {
        logging.DEBUG: grey + "[%(levelname)s] %(asctime)s - %(message)s" + reset,
        logging.INFO: grey + "[%(levelname)s] %(asctime)s - %(message)s" + reset,
        logging.WARNING: yellow + "[%(levelname)s] %(asctime)s - %(message)s" + reset,
        logging.ERROR: red + "[%(levelname)s] %(asctime)s - %(message)s" + reset,
        logging.CRITICAL: bold_red + "[%(levelname)s] %(asctime)s - %(message)s" + reset
    }

    def format(self, record: logging.LogRecord) -> str:
        log_fmt = self.FORMATS.get(record.levelno)
        formatter = logging.Formatter(log_fmt, datefmt="%Y-%m-%d %H:%M:%S")
        return formatter.format(record)


def json_formatter() -> jsonlogger.JsonFormatter:
    """JSON lines for log files; ``extra={...}`` fields become top-level keys."""
    return jsonlogger.JsonFormatter(
        "%(asctime)s %(levelname)s %(name)s %(funcName)s %(lineno)d %(message)s",
        rename_fields={"asctime": "timestamp", "levelname": "level", "funcName": "function", "lineno": "line"},
    )


class LogManager:
    """Manages logging configuration and provides logging utilities."""

    def __init__(self, name: str = settings.PROJECT_NAME, log_dir: Optional[str] = settings.ADVI_LOG_DIR):
        """Initialize the log manager.

        Args:
            name: Base name for the logger
            log_dir: Directory to store log files, ``None`` for console only
        """
        self.name = name
        self.log_dir = Path(log_dir) if log_dir else None

        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.DEBUG)
        self.logger.handlers.clear()

        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            self._setup_file_handlers()
        self._setup_console_handler()

    def _setup_file_handlers(self) -> None:
        """Set up file handlers for different log levels."""
        # Debug log - includes all messages
        debug_handler = logging.handlers.RotatingFileHandler(
            self.log_dir / "debug.log",
            maxBytes=10_000_000,  # 10MB
            backupCount=5
        )
        debug_handler.setLevel(logging.DEBUG)
        debug_handler.setFormatter(json_formatter())
        self.logger.addHandler(debug_handler)

        # Error log - only error and critical messages
        error_handler = logging.handlers.RotatingFileHandler(
            self.log_dir / "error.log",
            maxBytes=10_000_000,  # 10MB
            backupCount=5
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(json_formatter())
        self.logger.addHandler(error_handler)

    def _setup_console_handler(self) -> None:
        """Set up console handler for terminal output."""
        console_handler = logging.StreamHandler()
        console_handler.setLevel(getattr(logging, settings.ADVI_LOG_LEVEL, logging.INFO))
        console_handler.setFormatter(ConsoleFormatter())
        self.logger.addHandler(console_handler)
        # handled here, not again by the root logger
        self.logger.propagate = False

    def set_console_level(self, level: int) -> None:
        for handler in self.logger.handlers:
            if not isinstance(handler, logging.handlers.RotatingFileHandler):
                handler.setLevel(level)

    def get_logger(self, module_name: Optional[str] = None) -> logging.Logger:
        """Get a logger instance.

        Args:
            module_name: Module name for the logger.
                       If not provided, uses the base logger.

        Returns:
            Configured logger instance
        """
        if module_name:
            return logging.getLogger(f"{self.name}.{module_name}")
        return self.logger

    def log_command(self, command: str, exit_code: int,
                    duration: float, details: Optional[Dict[str, Any]] = None) -> None:
        """Log one command-line invocation with its outcome.

        Args:
            command: Command name (fit, eval predictive, ...)
            exit_code: Process exit status
            duration: Command duration in seconds
            details: Additional structured fields
        """
        duration_ms = round(duration * 1000, 2)
        status_word = "SUCCESS" if exit_code == 0 else "FAILED"
        message = f"{command} {exit_code} {status_word} ({duration_ms:.2f}ms)"

        extra = {
            "type": "command",
            "command": command,
            "exit_code": exit_code,
            "duration_ms": duration_ms,
        }
        if details:
            extra.update(details)

        if exit_code == 0:
            self.logger.info(message, extra=extra)
        else:
            self.logger.error(message, extra=extra)


# Global log manager instance
log_manager = LogManager()
