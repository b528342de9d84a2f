"""Model definitions, dataset validation and the bound log joint used by the optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core import autodiff as ad
from ..core.autodiff import Scalar
from ..core.exceptions import SchemaError
from ..core.transforms import ParameterBlock, PositiveLink, TransformSet
from ..utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

Dim = Union[str, int]


@dataclass(frozen=True)
class DataField:
    """One named input array.

    ``shape`` mixes symbolic dimension names (bound from the data) and
    literal sizes. ``per_observation`` fields are sliced along their first
    axis when a minibatch is drawn.
    """

    name: str
    shape: Tuple[Dim, ...] = ()
    dtype: str = "float"
    constraint: Optional[str] = None
    per_observation: bool = False

    def describe(self) -> str:
        dims = "x".join(str(d) for d in self.shape) or "scalar"
        text = f"{self.name}: {self.dtype}[{dims}]"
        if self.constraint:
            text += f" ({self.constraint})"
        return text


@dataclass(frozen=True)
class DatasetHandle:
    """Validated data for one model."""

    arrays: Mapping[str, Any]
    dims: Mapping[str, int]
    n_obs: int
    observation_fields: Tuple[str, ...] = ()

    def __getitem__(self, name: str) -> Any:
        return self.arrays[name]

    def subset(self, indices: Sequence[int]) -> "DatasetHandle":
        """Same data restricted to the given observations; dims keep their full-data values."""
        idx = np.asarray(indices, dtype=int)
        arrays = dict(self.arrays)
        for name in self.observation_fields:
            arrays[name] = np.asarray(self.arrays[name])[idx]
        return DatasetHandle(arrays=arrays, dims=self.dims, n_obs=int(idx.size),
                             observation_fields=self.observation_fields)

    def to_json(self) -> Dict[str, Any]:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.arrays.items()}


LogTerm = Callable[[Dict[str, Any], DatasetHandle], Scalar]


def _check_constraint(spec: DataField, arr: np.ndarray, dims: Mapping[str, int]) -> None:
    if spec.constraint is None or arr.size == 0:
        return
    if spec.constraint == "nonnegative" and np.any(arr < 0):
        raise SchemaError(spec.name, "values must be non-negative")
    if spec.constraint == "positive" and np.any(arr <= 0):
        raise SchemaError(spec.name, "values must be positive")
    if spec.constraint == "binary" and np.any((arr != 0) & (arr != 1)):
        raise SchemaError(spec.name, "values must be 0 or 1")
    if spec.constraint.startswith("index:"):
        upper = dims[spec.constraint.split(":", 1)[1]]
        if np.any(arr < 1) or np.any(arr > upper):
            raise SchemaError(spec.name, f"indices must lie in 1..{upper}")


@dataclass(frozen=True)
class ModelDefinition:
    """A differentiable probability model: constrained blocks plus a log joint."""

    name: str
    description: str
    data_schema: Tuple[DataField, ...]
    blocks: Callable[[Mapping[str, int]], List[ParameterBlock]]
    log_prior: LogTerm
    log_likelihood: LogTerm
    observation_dim: Optional[str] = "N"
    point_log_likelihood: Optional[Callable[[Dict[str, Any], DatasetHandle, int], float]] = None
    simulate: Optional[Callable[..., Dict[str, Any]]] = None
    supports_subsampling: bool = True
    fixed_dims: Mapping[str, int] = field(default_factory=dict)
    analytic_posterior: Optional[Callable[[DatasetHandle], Tuple[np.ndarray, np.ndarray]]] = None
    options: Mapping[str, Any] = field(default_factory=dict)

    def validate(self, data: Mapping[str, Any]) -> DatasetHandle:
        """Check raw data against the schema and bind symbolic dimensions."""
        dims: Dict[str, int] = dict(self.fixed_dims)
        arrays: Dict[str, Any] = {}
        for spec in self.data_schema:
            if spec.name not in data:
                raise SchemaError(spec.name, "missing")
            raw = data[spec.name]
            try:
                arr = np.asarray(raw, dtype=float)
            except (TypeError, ValueError):
                raise SchemaError(spec.name, "not numeric") from None
            if len(spec.shape) == 1 and arr.ndim == 0:
                arr = arr.reshape(1)
            empty_rows = arr.size == 0 and len(spec.shape) > 1 and arr.ndim != len(spec.shape)
            if empty_rows:
                # an empty list stands for zero rows; trailing axes come from known dims
                trailing = tuple(d if isinstance(d, int) else dims.get(d, 0) for d in spec.shape[1:])
                arr = arr.reshape((0,) + trailing)
            if arr.ndim != len(spec.shape):
                raise SchemaError(spec.name, f"expected {len(spec.shape)} dimensions, got {arr.ndim}")
            for axis, dim in enumerate(spec.shape):
                size = arr.shape[axis]
                if empty_rows and axis > 0:
                    continue
                if isinstance(dim, int):
                    if size != dim:
                        raise SchemaError(spec.name, f"axis {axis} must have size {dim}, got {size}")
                elif dim in dims:
                    if size != dims[dim]:
                        raise SchemaError(spec.name, f"axis {axis} ({dim}) has size {size}, expected {dims[dim]}")
                else:
                    dims[dim] = size
            if not np.all(np.isfinite(arr)):
                raise SchemaError(spec.name, "values must be finite")
            if spec.dtype == "int":
                if not np.all(arr == np.round(arr)):
                    raise SchemaError(spec.name, "values must be integers")
                arr = arr.astype(np.int64)
            arrays[spec.name] = arr
        for spec in self.data_schema:
            _check_constraint(spec, arrays[spec.name], dims)
        extra = set(data) - {s.name for s in self.data_schema}
        if extra:
            logger.debug(f"Ignoring unknown data fields for {self.name}: {sorted(extra)}")
        n_obs = dims.get(self.observation_dim, 0) if self.observation_dim else 0
        observation_fields = tuple(s.name for s in self.data_schema if s.per_observation)
        return DatasetHandle(arrays=arrays, dims=dims, n_obs=int(n_obs), observation_fields=observation_fields)

    def parameter_blocks(self, data: DatasetHandle) -> List[ParameterBlock]:
        return list(self.blocks(data.dims))

    def transform_set(self, data: DatasetHandle,
                      link: Union[str, PositiveLink] = PositiveLink.LOG) -> TransformSet:
        return TransformSet(tuple(self.parameter_blocks(data))).with_positive_link(link)

    def log_joint(self, values: Dict[str, Any], data: DatasetHandle, likelihood_scale: float = 1.0) -> Scalar:
        prior = self.log_prior(values, data)
        if data.n_obs == 0 and self.observation_dim is not None:
            return prior
        likelihood = self.log_likelihood(values, data)
        if likelihood_scale != 1.0:
            likelihood = ad.mul(likelihood_scale, likelihood)
        return ad.add(prior, likelihood)

    def bind(self, data: DatasetHandle) -> "BoundModel":
        return BoundModel(self, data)

    def simulate_data(self, rng: np.random.Generator, **options) -> Dict[str, Any]:
        if self.simulate is None:
            raise NotImplementedError(f"model '{self.name}' has no simulator")
        return self.simulate(rng, **options)


@dataclass(frozen=True)
class BoundModel:
    """A model with its data attached: the object the gradient estimators evaluate."""

    definition: ModelDefinition
    data: DatasetHandle

    @property
    def name(self) -> str:
        return self.definition.name

    def log_joint(self, values: Dict[str, Any], likelihood_scale: float = 1.0) -> Scalar:
        return self.definition.log_joint(values, self.data, likelihood_scale)

    def subset(self, indices: Sequence[int]) -> "BoundModel":
        return BoundModel(self.definition, self.data.subset(indices))
