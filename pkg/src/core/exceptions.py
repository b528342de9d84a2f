"""Error types raised across the inference engine."""
from typing import Optional


class ADVIError(Exception):
    """Base class for all engine errors."""


class ModelEvaluationError(ADVIError):
    """A single log-density evaluation failed.

    The optimizer treats these as recoverable: the Monte Carlo sample that
    produced it is discarded and redrawn.
    """


class NonFiniteValueError(ModelEvaluationError, ArithmeticError):
    """A tape node (or a plain float computation) produced a non-finite value."""

    def __init__(self, kind: str, node: int, value: float, detail: Optional[str] = None) -> None:
        self.kind = kind
        self.node = node
        self.value = value
        location = f"node {node}" if node >= 0 else "untaped value"
        message = f"{kind} produced non-finite value {value!r} at {location}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class SupportError(ModelEvaluationError):
    """A density was evaluated at a value outside its support (log density is -inf)."""

    def __init__(self, distribution: str, value: object) -> None:
        self.distribution = distribution
        self.value = value
        super().__init__(f"{distribution}: value {value!r} is outside the support")


class ParameterDomainError(ModelEvaluationError):
    """A density parameter is outside its domain (e.g. a non-positive scale)."""

    def __init__(self, distribution: str, parameter: str, value: object) -> None:
        self.distribution = distribution
        self.parameter = parameter
        self.value = value
        super().__init__(f"{distribution}: parameter {parameter}={value!r} is outside its domain")


class ConstraintError(ADVIError, ValueError):
    """Invalid constraint specification or a constrained value violating it."""

    def __init__(self, message: str, coordinate: Optional[int] = None) -> None:
        self.coordinate = coordinate
        if coordinate is not None:
            message = f"{message} (coordinate {coordinate})"
        super().__init__(message)


class DegenerateCovarianceError(ADVIError):
    """The full-rank Cholesky factor has a (numerically) zero diagonal entry."""


class DivergedError(ADVIError):
    """Optimization cannot continue: every Monte Carlo draw failed, or no step-size scale works."""


class InvalidConfigError(ADVIError, ValueError):
    """A run configuration is inconsistent with the model or data (e.g. minibatch larger than N)."""


class SchemaError(ADVIError, ValueError):
    """Input data does not match a model's data schema."""

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(f"data field '{field}': {message}")


class UnknownModelError(ADVIError, LookupError):
    """Requested model name is not in the registry."""

    def __init__(self, name: str, known: Optional[list] = None) -> None:
        self.name = name
        message = f"unknown model '{name}'"
        if known:
            message = f"{message}; available: {', '.join(sorted(known))}"
        super().__init__(message)


class OutputPathError(ADVIError, OSError):
    """An output file cannot be written."""
