"""Bijections between constrained parameter blocks and unconstrained reals.

Each constraint maps an unconstrained vector ``zeta`` to a constrained vector
``theta`` through ``inverse`` and records ``log |det J|`` of that map. The same
code path runs on autodiff Vars (inside a log-density tape) and on plain
floats (sampling, monitoring), because every primitive it uses is
polymorphic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Scalar, Tape, Var, value_of
from .exceptions import ConstraintError
from ..utils.log_manager import log_manager

logger = log_manager.get_logger(__name__)

EXP_CLAMP = 700.0
SIMPLEX_TOLERANCE = 1e-8


class ConstraintKind(str, Enum):
    UNCONSTRAINED = "unconstrained"
    LOWER_BOUNDED = "lower_bounded"
    UPPER_BOUNDED = "upper_bounded"
    INTERVAL = "interval"
    ORDERED = "ordered"
    SIMPLEX = "simplex"
    POSITIVE_ORDERED = "positive_ordered"


class PositiveLink(str, Enum):
    """How a one-sided bound is mapped to the real line.

    ``log`` is ``zeta = log(theta - lb)``; ``softplus`` is
    ``zeta = log(exp(theta - lb) - 1)``.
    """

    LOG = "log"
    SOFTPLUS = "softplus"


ELEMENTWISE = {
    ConstraintKind.UNCONSTRAINED,
    ConstraintKind.LOWER_BOUNDED,
    ConstraintKind.UPPER_BOUNDED,
    ConstraintKind.INTERVAL,
}


@dataclass(frozen=True)
class ConstraintSpec:
    """Domain of one constrained vector.

    For elementwise kinds ``size`` is the number of independent coordinates;
    for ordered, positive_ordered and simplex it is the vector length ``n``.
    """

    kind: ConstraintKind
    size: int = 1
    lb: Optional[float] = None
    ub: Optional[float] = None
    link: PositiveLink = PositiveLink.LOG

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        object.__setattr__(self, "link", PositiveLink(self.link))
        if self.size < 1:
            raise ConstraintError(f"{self.kind.value} requires n >= 1, got {self.size}")
        if self.kind == ConstraintKind.LOWER_BOUNDED and self.lb is None:
            raise ConstraintError("lower_bounded requires lb")
        if self.kind == ConstraintKind.UPPER_BOUNDED and self.ub is None:
            raise ConstraintError("upper_bounded requires ub")
        if self.kind == ConstraintKind.INTERVAL:
            if self.lb is None or self.ub is None:
                raise ConstraintError("interval requires lb and ub")
            if not self.lb < self.ub:
                raise ConstraintError(f"interval requires lb < ub, got ({self.lb}, {self.ub})")

    @classmethod
    def unconstrained(cls, size: int = 1) -> "ConstraintSpec":
        return cls(ConstraintKind.UNCONSTRAINED, size)

    @classmethod
    def lower_bounded(cls, lb: float = 0.0, size: int = 1,
                      link: PositiveLink = PositiveLink.LOG) -> "ConstraintSpec":
        return cls(ConstraintKind.LOWER_BOUNDED, size, lb=float(lb), link=link)

    @classmethod
    def positive(cls, size: int = 1) -> "ConstraintSpec":
        return cls.lower_bounded(0.0, size)

    @classmethod
    def upper_bounded(cls, ub: float, size: int = 1,
                      link: PositiveLink = PositiveLink.LOG) -> "ConstraintSpec":
        return cls(ConstraintKind.UPPER_BOUNDED, size, ub=float(ub), link=link)

    @classmethod
    def interval(cls, lb: float, ub: float, size: int = 1) -> "ConstraintSpec":
        return cls(ConstraintKind.INTERVAL, size, lb=float(lb), ub=float(ub))

    @classmethod
    def ordered(cls, n: int) -> "ConstraintSpec":
        return cls(ConstraintKind.ORDERED, n)

    @classmethod
    def positive_ordered(cls, n: int) -> "ConstraintSpec":
        return cls(ConstraintKind.POSITIVE_ORDERED, n)

    @classmethod
    def simplex(cls, n: int) -> "ConstraintSpec":
        return cls(ConstraintKind.SIMPLEX, n)

    @property
    def constrained_dim(self) -> int:
        return self.size

    @property
    def unconstrained_dim(self) -> int:
        if self.kind == ConstraintKind.SIMPLEX:
            return self.size - 1
        return self.size

    @property
    def has_positive_link(self) -> bool:
        return self.kind in (ConstraintKind.LOWER_BOUNDED, ConstraintKind.UPPER_BOUNDED)

    def with_link(self, link: Union[str, PositiveLink]) -> "ConstraintSpec":
        if not self.has_positive_link:
            return self
        return replace(self, link=PositiveLink(link))

    def describe(self) -> str:
        if self.kind == ConstraintKind.LOWER_BOUNDED:
            return f"lower_bounded({self.lb:g}, link={self.link.value})"
        if self.kind == ConstraintKind.UPPER_BOUNDED:
            return f"upper_bounded({self.ub:g}, link={self.link.value})"
        if self.kind == ConstraintKind.INTERVAL:
            return f"interval({self.lb:g}, {self.ub:g})"
        return f"{self.kind.value}({self.size})"


@dataclass
class ClampCounter:
    """Counts exp arguments clamped to +-EXP_CLAMP."""

    count: int = 0


@dataclass
class TransformedPoint:
    zeta: np.ndarray
    theta: np.ndarray
    log_abs_det_jac_inv: float


@dataclass
class InverseGradient:
    """Inverse transform with its first-order derivatives at one point.

    ``jacobian[i, j] = d theta_i / d zeta_j``.
    """

    point: TransformedPoint
    log_jac_grad: np.ndarray
    jacobian: np.ndarray

    def vjp(self, v: Sequence[float]) -> np.ndarray:
        """Pull a gradient w.r.t. theta back to zeta."""
        return np.asarray(v, dtype=float) @ self.jacobian

    def jvp(self, u: Sequence[float]) -> np.ndarray:
        """Push a zeta-space direction forward to theta."""
        return self.jacobian @ np.asarray(u, dtype=float)


def _exp(z: Scalar, clamps: Optional[ClampCounter]) -> Scalar:
    v = value_of(z)
    if v > EXP_CLAMP or v < -EXP_CLAMP:
        if clamps is not None:
            clamps.count += 1
        # the clamped value is a constant, so no gradient flows through it
        return math.exp(max(-EXP_CLAMP, min(EXP_CLAMP, v)))
    return ad.exp(z)


def _positive_part(z: Scalar, link: PositiveLink, clamps: Optional[ClampCounter]) -> Tuple[Scalar, Scalar]:
    """Return ``(offset, log_jac)`` for one coordinate of a one-sided bound."""
    if link == PositiveLink.SOFTPLUS:
        return ad.softplus(z), ad.neg(ad.softplus(ad.neg(z)))
    return _exp(z, clamps), z


def inverse_vars(
    spec: ConstraintSpec,
    zeta: Sequence[Scalar],
    clamps: Optional[ClampCounter] = None,
) -> Tuple[List[Scalar], Scalar]:
    """Map unconstrained values to constrained ones, tape-aware.

    Returns the constrained coordinates and ``log |det J_{T^-1}(zeta)|``.
    """
    if len(zeta) != spec.unconstrained_dim:
        raise ConstraintError(
            f"{spec.describe()} expects {spec.unconstrained_dim} unconstrained values, got {len(zeta)}"
        )
    kind = spec.kind
    terms: List[Scalar] = []
    theta: List[Scalar] = []

    if kind == ConstraintKind.UNCONSTRAINED:
        return list(zeta), 0.0

    if kind == ConstraintKind.LOWER_BOUNDED:
        for z in zeta:
            offset, lj = _positive_part(z, spec.link, clamps)
            theta.append(ad.add(spec.lb, offset))
            terms.append(lj)
        return theta, ad.sum_all(terms)

    if kind == ConstraintKind.UPPER_BOUNDED:
        for z in zeta:
            offset, lj = _positive_part(z, spec.link, clamps)
            theta.append(ad.sub(spec.ub, offset))
            terms.append(lj)
        return theta, ad.sum_all(terms)

    if kind == ConstraintKind.INTERVAL:
        width = spec.ub - spec.lb
        log_width = math.log(width)
        for z in zeta:
            theta.append(ad.add(spec.lb, ad.mul(width, ad.logistic(z))))
            terms.append(ad.sub(ad.sub(log_width, ad.softplus(ad.neg(z))), ad.softplus(z)))
        return theta, ad.sum_all(terms)

    if kind in (ConstraintKind.ORDERED, ConstraintKind.POSITIVE_ORDERED):
        if kind == ConstraintKind.ORDERED:
            current = zeta[0]
        else:
            current = _exp(zeta[0], clamps)
            terms.append(zeta[0])
        theta.append(current)
        for z in zeta[1:]:
            current = ad.add(current, _exp(z, clamps))
            theta.append(current)
            terms.append(z)
        return theta, ad.sum_all(terms)

    # simplex: stick-breaking with offsets so that zeta = 0 is the uniform point
    k = spec.size
    log_stick: Scalar = 0.0
    for i, z in enumerate(zeta):
        y = ad.sub(z, math.log(k - 1 - i))
        log_z = ad.neg(ad.softplus(ad.neg(y)))
        log_1mz = ad.neg(ad.softplus(y))
        theta.append(_exp(ad.add(log_stick, log_z), clamps))
        terms.append(ad.sum_all([log_z, log_1mz, log_stick]))
        log_stick = ad.add(log_stick, log_1mz)
    theta.append(_exp(log_stick, clamps))
    return theta, ad.sum_all(terms)


def _nudge_inside(spec: ConstraintSpec, theta: np.ndarray) -> np.ndarray:
    """Move values that rounded onto a boundary one ulp back inside."""
    kind = spec.kind
    if kind == ConstraintKind.LOWER_BOUNDED:
        return np.where(theta <= spec.lb, np.nextafter(spec.lb, np.inf), theta)
    if kind == ConstraintKind.UPPER_BOUNDED:
        return np.where(theta >= spec.ub, np.nextafter(spec.ub, -np.inf), theta)
    if kind == ConstraintKind.INTERVAL:
        theta = np.where(theta <= spec.lb, np.nextafter(spec.lb, np.inf), theta)
        return np.where(theta >= spec.ub, np.nextafter(spec.ub, -np.inf), theta)
    if kind in (ConstraintKind.ORDERED, ConstraintKind.POSITIVE_ORDERED):
        theta = theta.copy()
        if kind == ConstraintKind.POSITIVE_ORDERED and theta[0] <= 0.0:
            theta[0] = np.nextafter(0.0, 1.0)
        for i in range(1, theta.size):
            if theta[i] <= theta[i - 1]:
                theta[i] = np.nextafter(theta[i - 1], np.inf)
        return theta
    if kind == ConstraintKind.SIMPLEX:
        return np.maximum(theta, np.finfo(float).tiny)
    return theta


def inverse(spec: ConstraintSpec, zeta: Sequence[float],
            clamps: Optional[ClampCounter] = None) -> TransformedPoint:
    """Numeric inverse transform; theta is strictly feasible for finite zeta."""
    zeta = np.asarray(zeta, dtype=float)
    values, log_jac = inverse_vars(spec, [float(z) for z in zeta], clamps)
    theta = _nudge_inside(spec, np.array([float(v) for v in values]))
    return TransformedPoint(zeta=zeta, theta=theta, log_abs_det_jac_inv=float(log_jac))


def inverse_with_grad(spec: ConstraintSpec, zeta: Sequence[float]) -> InverseGradient:
    """Inverse transform plus the gradient of its log-Jacobian and its full Jacobian."""
    zeta = np.asarray(zeta, dtype=float)
    tape = Tape()
    inputs = tape.variables(zeta)
    values, log_jac = inverse_vars(spec, inputs)
    log_jac_grad = ad.gradient(tape, log_jac, inputs)
    jacobian = np.vstack([ad.gradient(tape, v, inputs) for v in values]) if values else np.zeros((0, zeta.size))
    theta = _nudge_inside(spec, np.array([value_of(v) for v in values]))
    point = TransformedPoint(zeta=zeta, theta=theta, log_abs_det_jac_inv=value_of(log_jac))
    return InverseGradient(point=point, log_jac_grad=log_jac_grad, jacobian=jacobian)


def _log_expm1(x: float) -> float:
    if x > 30.0:
        return x + math.log1p(-math.exp(-x))
    return math.log(math.expm1(x))


def forward(spec: ConstraintSpec, theta: Sequence[float]) -> np.ndarray:
    """Map a strictly feasible constrained vector to the unconstrained space."""
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != spec.constrained_dim:
        raise ConstraintError(
            f"{spec.describe()} expects {spec.constrained_dim} constrained values, got {theta.size}"
        )
    for i, t in enumerate(theta):
        if not math.isfinite(t):
            raise ConstraintError(f"non-finite value {t!r}", coordinate=i)
    kind = spec.kind

    if kind == ConstraintKind.UNCONSTRAINED:
        return theta.copy()

    if kind in (ConstraintKind.LOWER_BOUNDED, ConstraintKind.UPPER_BOUNDED):
        if kind == ConstraintKind.LOWER_BOUNDED:
            gap = theta - spec.lb
            bound = f"> {spec.lb:g}"
        else:
            gap = spec.ub - theta
            bound = f"< {spec.ub:g}"
        zeta = np.empty_like(theta)
        for i, g in enumerate(gap):
            if not g > 0.0:
                raise ConstraintError(f"value {theta[i]!r} violates {bound}", coordinate=i)
            zeta[i] = _log_expm1(g) if spec.link == PositiveLink.SOFTPLUS else math.log(g)
        return zeta

    if kind == ConstraintKind.INTERVAL:
        zeta = np.empty_like(theta)
        width = spec.ub - spec.lb
        for i, t in enumerate(theta):
            if not spec.lb < t < spec.ub:
                raise ConstraintError(f"value {t!r} outside ({spec.lb:g}, {spec.ub:g})", coordinate=i)
            p = (t - spec.lb) / width
            zeta[i] = math.log(p) - math.log1p(-p)
        return zeta

    if kind in (ConstraintKind.ORDERED, ConstraintKind.POSITIVE_ORDERED):
        zeta = np.empty_like(theta)
        if kind == ConstraintKind.POSITIVE_ORDERED:
            if not theta[0] > 0.0:
                raise ConstraintError(f"value {theta[0]!r} must be positive", coordinate=0)
            zeta[0] = math.log(theta[0])
        else:
            zeta[0] = theta[0]
        for i in range(1, theta.size):
            step = theta[i] - theta[i - 1]
            if not step > 0.0:
                raise ConstraintError("values must be strictly increasing", coordinate=i)
            zeta[i] = math.log(step)
        return zeta

    # simplex
    for i, t in enumerate(theta):
        if not t > 0.0:
            raise ConstraintError(f"simplex entry {t!r} must be positive", coordinate=i)
    total = theta.sum()
    if abs(total - 1.0) > SIMPLEX_TOLERANCE:
        raise ConstraintError(f"simplex entries sum to {total!r}, not 1")
    k = spec.size
    # suffix[i] = sum of theta[i:], avoids cancellation in 1 - cumsum
    suffix = np.cumsum(theta[::-1])[::-1]
    zeta = np.empty(k - 1)
    for i in range(k - 1):
        zeta[i] = math.log(theta[i]) - math.log(suffix[i + 1]) + math.log(k - 1 - i)
    return zeta


def weibull_poisson_transformed_density(x: Union[int, Iterable[int]], zeta: Scalar) -> Scalar:
    """Log of Poisson(x | e^zeta) * Weibull(e^zeta; 1.5, 1) * e^zeta.

    Written in terms of ``zeta`` directly so the density tends to zero (log to
    -inf) smoothly as ``zeta -> -inf`` instead of underflowing to log(0).
    """
    counts = [int(x)] if np.isscalar(x) else [int(c) for c in x]
    for c in counts:
        if c < 0:
            raise ConstraintError(f"count {c} must be non-negative")
    if not isinstance(zeta, Var) and value_of(zeta) == -math.inf:
        return -math.inf
    shape = 1.5
    rate = ad.exp(zeta)
    log_lik = ad.sub(
        ad.mul(float(sum(counts)), zeta),
        ad.add(ad.mul(float(len(counts)), rate), sum(math.lgamma(c + 1.0) for c in counts)),
    )
    # log Weibull(theta; k, 1) = log k + (k - 1) log theta - theta^k, with log theta = zeta
    log_prior = ad.sub(ad.add(math.log(shape), ad.mul(shape - 1.0, zeta)), ad.exp(ad.mul(shape, zeta)))
    return ad.sum_all([log_lik, log_prior, zeta])


@dataclass(frozen=True)
class ParameterBlock:
    """A named constrained parameter.

    ``count`` repeats the constraint (for example one ordered vector per user).
    ``scalar`` marks a single-coordinate block addressed without an index.
    """

    name: str
    spec: ConstraintSpec
    count: Optional[int] = None
    scalar: bool = False

    def __post_init__(self) -> None:
        if self.scalar and (self.count is not None or self.spec.constrained_dim != 1):
            raise ConstraintError(f"block '{self.name}': scalar blocks hold exactly one value")
        if self.count is not None and self.count < 0:
            raise ConstraintError(f"block '{self.name}': count must be >= 0")

    @property
    def repeats(self) -> int:
        return 1 if self.count is None else self.count

    @property
    def constrained_dim(self) -> int:
        return self.repeats * self.spec.constrained_dim

    @property
    def unconstrained_dim(self) -> int:
        return self.repeats * self.spec.unconstrained_dim

    def flat_names(self) -> List[str]:
        if self.scalar:
            return [self.name]
        n = self.spec.constrained_dim
        if self.count is None:
            return [f"{self.name}.{i + 1}" for i in range(n)]
        return [f"{self.name}.{r + 1}.{i + 1}" for r in range(self.count) for i in range(n)]


@dataclass
class TransformSet:
    """Ordered collection of parameter blocks forming one model's latent space."""

    blocks: Tuple[ParameterBlock, ...]
    _offsets: List[Tuple[int, int]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.blocks = tuple(self.blocks)
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise ConstraintError(f"duplicate block names in {names}")
        self._offsets = []
        u = c = 0
        for block in self.blocks:
            self._offsets.append((u, c))
            u += block.unconstrained_dim
            c += block.constrained_dim
        self._dim = u
        self._constrained_dim = c

    @property
    def dim(self) -> int:
        """Unconstrained dimension K."""
        return self._dim

    @property
    def constrained_dim(self) -> int:
        return self._constrained_dim

    def block(self, name: str) -> ParameterBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def flat_names(self) -> List[str]:
        names: List[str] = []
        for b in self.blocks:
            names.extend(b.flat_names())
        return names

    def unconstrained_names(self) -> List[str]:
        names: List[str] = []
        for b in self.blocks:
            n = b.spec.unconstrained_dim
            if b.scalar:
                names.append(b.name)
            elif b.count is None:
                names.extend(f"{b.name}.{i + 1}" for i in range(n))
            else:
                names.extend(f"{b.name}.{r + 1}.{i + 1}" for r in range(b.count) for i in range(n))
        return names

    def with_positive_link(self, link: Union[str, PositiveLink]) -> "TransformSet":
        """Copy with every one-sided bound switched to ``link``."""
        return TransformSet(tuple(replace(b, spec=b.spec.with_link(link)) for b in self.blocks))

    def inverse_vars(
        self,
        zeta: Sequence[Scalar],
        clamps: Optional[ClampCounter] = None,
    ) -> Tuple[Dict[str, object], Scalar]:
        """Constrained values per block (Scalar, list or list of lists) and the total log-Jacobian."""
        if len(zeta) != self._dim:
            raise ConstraintError(f"expected {self._dim} unconstrained values, got {len(zeta)}")
        values: Dict[str, object] = {}
        terms: List[Scalar] = []
        for block, (u, _) in zip(self.blocks, self._offsets):
            n = block.spec.unconstrained_dim
            if block.count is None:
                theta, lj = inverse_vars(block.spec, zeta[u:u + n], clamps)
                values[block.name] = theta[0] if block.scalar else theta
                terms.append(lj)
                continue
            rows = []
            for r in range(block.count):
                start = u + r * n
                theta, lj = inverse_vars(block.spec, zeta[start:start + n], clamps)
                rows.append(theta)
                terms.append(lj)
            values[block.name] = rows
        return values, ad.sum_all(terms) if terms else 0.0

    def inverse(self, zeta: Sequence[float], clamps: Optional[ClampCounter] = None) -> TransformedPoint:
        zeta = np.asarray(zeta, dtype=float)
        if zeta.size != self._dim:
            raise ConstraintError(f"expected {self._dim} unconstrained values, got {zeta.size}")
        parts = []
        log_jac = 0.0
        for block, (u, _) in zip(self.blocks, self._offsets):
            n = block.spec.unconstrained_dim
            for r in range(block.repeats):
                start = u + r * n
                point = inverse(block.spec, zeta[start:start + n], clamps)
                parts.append(point.theta)
                log_jac += point.log_abs_det_jac_inv
        theta = np.concatenate(parts) if parts else np.zeros(0)
        return TransformedPoint(zeta=zeta, theta=theta, log_abs_det_jac_inv=log_jac)

    def unflatten(self, theta: Sequence[float]) -> Dict[str, object]:
        """Split a flat constrained vector into per-block float values."""
        theta = np.asarray(theta, dtype=float)
        if theta.size != self._constrained_dim:
            raise ConstraintError(f"expected {self._constrained_dim} constrained values, got {theta.size}")
        values: Dict[str, object] = {}
        for block, (_, c) in zip(self.blocks, self._offsets):
            chunk = theta[c:c + block.constrained_dim]
            if block.scalar:
                values[block.name] = float(chunk[0])
            elif block.count is None:
                values[block.name] = chunk.copy()
            else:
                values[block.name] = chunk.reshape(block.count, block.spec.constrained_dim).copy()
        return values

    def flatten(self, values: Dict[str, object]) -> np.ndarray:
        parts = []
        for block in self.blocks:
            if block.name not in values:
                raise ConstraintError(f"missing value for block '{block.name}'")
            arr = np.asarray(values[block.name], dtype=float).ravel()
            if arr.size != block.constrained_dim:
                raise ConstraintError(
                    f"block '{block.name}' expects {block.constrained_dim} values, got {arr.size}"
                )
            parts.append(arr)
        return np.concatenate(parts) if parts else np.zeros(0)

    def forward(self, values: Union[Dict[str, object], Sequence[float]]) -> np.ndarray:
        """Unconstrained vector for per-block values or a flat constrained vector."""
        theta = self.flatten(values) if isinstance(values, dict) else np.asarray(values, dtype=float)
        if theta.size != self._constrained_dim:
            raise ConstraintError(f"expected {self._constrained_dim} constrained values, got {theta.size}")
        parts = []
        for block, (_, c) in zip(self.blocks, self._offsets):
            m = block.spec.constrained_dim
            for r in range(block.repeats):
                start = c + r * m
                try:
                    parts.append(forward(block.spec, theta[start:start + m]))
                except ConstraintError as e:
                    raise ConstraintError(f"block '{block.name}': {e}") from e
        return np.concatenate(parts) if parts else np.zeros(0)
