"""
Model zoo.
Importing this package registers every model; use :func:`build` to get one by name.
"""
from .base import BoundModel, DataField, DatasetHandle, ModelDefinition
from .registry import available, build, register
from . import simple, regression, time_series, factorization, mixture  # noqa: F401  (registration)

__all__ = [
    "BoundModel",
    "DataField",
    "DatasetHandle",
    "ModelDefinition",
    "available",
    "build",
    "register",
]
