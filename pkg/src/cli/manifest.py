"""Validated run settings for one command-line invocation."""
from __future__ import annotations

import os
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

import settings
from ..core.exceptions import OutputPathError
from ..core.optimizer import FitConfig
from ..core.transforms import PositiveLink
from ..core.variational import Family


class ExitCode(IntEnum):
    OK = 0
    ERROR = 1
    DIVERGED = 2
    SCHEMA = 3
    UNKNOWN_MODEL = 4
    OUTPUT_PATH = 5
    INVALID_MANIFEST = 6


class RunManifest(BaseModel):
    """Everything a fit or evaluation run needs, validated before any work starts."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    model: str
    data: Optional[Path] = None
    family: Family = Family.MEANFIELD
    grad_samples: int = Field(1, ge=1)
    eta: Union[Literal["auto"], float] = "auto"
    seed: int = Field(0, ge=0)
    minibatch: int = Field(0, ge=0)
    max_iters: int = Field(10_000, ge=1)
    tol: float = Field(0.01, gt=0.0)
    output: Optional[Path] = None
    diagnostic: Optional[Path] = None
    threads: int = Field(settings.ADVI_THREADS, ge=1)
    draws: int = Field(settings.ADVI_OUTPUT_SAMPLES, ge=1)
    positive_transform: PositiveLink = PositiveLink.LOG
    wallclock: bool = True
    options: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("eta")
    @classmethod
    def _positive_eta(cls, value):
        if value != "auto" and not value > 0.0:
            raise ValueError("eta must be 'auto' or a positive number")
        return value

    def fit_config(self) -> FitConfig:
        return FitConfig(
            family=self.family,
            grad_samples=self.grad_samples,
            eta_scale=self.eta,
            seed=self.seed,
            minibatch=self.minibatch,
            max_iters=self.max_iters,
            tol_rel=self.tol,
            threads=self.threads,
            positive_transform=self.positive_transform,
        )

    def check_writable(self) -> None:
        """Fail early if an output file could not be created."""
        for path in (self.output, self.diagnostic):
            if path is not None:
                ensure_writable(path)


def ensure_writable(path: Path) -> None:
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    if path.is_dir():
        raise OutputPathError(f"{path} is a directory")
    if not parent.is_dir():
        raise OutputPathError(f"directory {parent} does not exist")
    if not os.access(parent, os.W_OK) or (path.exists() and not os.access(path, os.W_OK)):
        raise OutputPathError(f"{path} is not writable")
