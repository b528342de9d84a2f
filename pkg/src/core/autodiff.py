"""Reverse-mode automatic differentiation over scalar expression tapes.

A :class:`Tape` records every scalar operation of one log-density evaluation
together with the local partial derivatives of the operation, computed
eagerly during the forward pass. :func:`gradient` then sweeps the tape
backwards once to accumulate adjoints.

Every primitive also accepts plain floats. When no operand is a :class:`Var`
the primitive simply returns a float, so density and model code written
against these primitives doubles as a fast value-only path.
"""
from __future__ import annotations

import math
from typing import Callable, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
from scipy import special

from .exceptions import NonFiniteValueError


class Tape:
    """Append-only record of scalar operations.

    Node ``i`` stores its value, the indices of its operands (always ``< i``)
    and the partial derivative of its value with respect to each operand.
    A tape is not thread-safe; build one per evaluation.
    """

    __slots__ = ("values", "operands", "partials", "kinds")

    def __init__(self) -> None:
        self.values: List[float] = []
        self.operands: List[Tuple[int, ...]] = []
        self.partials: List[Tuple[float, ...]] = []
        self.kinds: List[str] = []

    def __len__(self) -> int:
        return len(self.values)

    def variable(self, value: float) -> "Var":
        """Register an independent input."""
        return self.push("input", float(value), (), ())

    def variables(self, values: Iterable[float]) -> List["Var"]:
        return [self.variable(v) for v in values]

    def push(
        self,
        kind: str,
        value: float,
        operands: Tuple[int, ...],
        partials: Tuple[float, ...],
    ) -> "Var":
        index = len(self.values)
        if not math.isfinite(value):
            raise NonFiniteValueError(kind, index, value)
        self.values.append(value)
        self.operands.append(operands)
        self.partials.append(partials)
        self.kinds.append(kind)
        return Var(self, index)


class Var:
    """Handle to one node of a tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: Tape, index: int) -> None:
        self.tape = tape
        self.index = index

    @property
    def value(self) -> float:
        return self.tape.values[self.index]

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        return f"Var(index={self.index}, value={self.value!r})"

    def __add__(self, other: "Scalar") -> "Scalar":
        return add(self, other)

    def __radd__(self, other: "Scalar") -> "Scalar":
        return add(other, self)

    def __sub__(self, other: "Scalar") -> "Scalar":
        return sub(self, other)

    def __rsub__(self, other: "Scalar") -> "Scalar":
        return sub(other, self)

    def __mul__(self, other: "Scalar") -> "Scalar":
        return mul(self, other)

    def __rmul__(self, other: "Scalar") -> "Scalar":
        return mul(other, self)

    def __truediv__(self, other: "Scalar") -> "Scalar":
        return div(self, other)

    def __rtruediv__(self, other: "Scalar") -> "Scalar":
        return div(other, self)

    def __neg__(self) -> "Scalar":
        return neg(self)

    def __pow__(self, other: "Scalar") -> "Scalar":
        return power(self, other)

    def __rpow__(self, other: "Scalar") -> "Scalar":
        return power(other, self)


Scalar = Union[float, Var]


def value_of(x: Scalar) -> float:
    """Numeric value of a Var or a plain number."""
    if isinstance(x, Var):
        return x.tape.values[x.index]
    return float(x)


def is_var(x: object) -> bool:
    return isinstance(x, Var)


def _checked(kind: str, value: float) -> float:
    if not math.isfinite(value):
        raise NonFiniteValueError(kind, -1, value)
    return value


def _tape_of(a: Var, b: Var) -> Tape:
    if a.tape is not b.tape:
        raise ValueError("cannot combine Vars recorded on different tapes")
    return a.tape


# Binary arithmetic ---------------------------------------------------------

def add(a: Scalar, b: Scalar) -> Scalar:
    if isinstance(a, Var):
        if isinstance(b, Var):
            tape = _tape_of(a, b)
            return tape.push("add", a.value + b.value, (a.index, b.index), (1.0, 1.0))
        return a.tape.push("add", a.value + float(b), (a.index,), (1.0,))
    if isinstance(b, Var):
        return b.tape.push("add", float(a) + b.value, (b.index,), (1.0,))
    return _checked("add", float(a) + float(b))


def sub(a: Scalar, b: Scalar) -> Scalar:
    if isinstance(a, Var):
        if isinstance(b, Var):
            tape = _tape_of(a, b)
            return tape.push("sub", a.value - b.value, (a.index, b.index), (1.0, -1.0))
        return a.tape.push("sub", a.value - float(b), (a.index,), (1.0,))
    if isinstance(b, Var):
        return b.tape.push("sub", float(a) - b.value, (b.index,), (-1.0,))
    return _checked("sub", float(a) - float(b))


def mul(a: Scalar, b: Scalar) -> Scalar:
    if isinstance(a, Var):
        if isinstance(b, Var):
            tape = _tape_of(a, b)
            av, bv = a.value, b.value
            return tape.push("mul", av * bv, (a.index, b.index), (bv, av))
        bf = float(b)
        return a.tape.push("mul", a.value * bf, (a.index,), (bf,))
    if isinstance(b, Var):
        af = float(a)
        return b.tape.push("mul", af * b.value, (b.index,), (af,))
    return _checked("mul", float(a) * float(b))


def div(a: Scalar, b: Scalar) -> Scalar:
    bv = value_of(b)
    if bv == 0.0:
        tape = a.tape if isinstance(a, Var) else (b.tape if isinstance(b, Var) else None)
        raise NonFiniteValueError("div", len(tape) if tape is not None else -1, math.inf, "division by zero")
    av = value_of(a)
    v = av / bv
    if isinstance(a, Var):
        if isinstance(b, Var):
            tape = _tape_of(a, b)
            return tape.push("div", v, (a.index, b.index), (1.0 / bv, -v / bv))
        return a.tape.push("div", v, (a.index,), (1.0 / bv,))
    if isinstance(b, Var):
        return b.tape.push("div", v, (b.index,), (-v / bv,))
    return _checked("div", v)


def neg(a: Scalar) -> Scalar:
    if isinstance(a, Var):
        return a.tape.push("neg", -a.value, (a.index,), (-1.0,))
    return -float(a)


def power(a: Scalar, b: Scalar) -> Scalar:
    """``a ** b``. A Var exponent requires a strictly positive base."""
    av, bv = value_of(a), value_of(b)
    if isinstance(b, Var) and av <= 0.0:
        tape = b.tape
        raise NonFiniteValueError("pow", len(tape), math.nan, "variable exponent needs a positive base")
    if av < 0.0 and not float(bv).is_integer():
        tape = a.tape if isinstance(a, Var) else None
        raise NonFiniteValueError("pow", len(tape) if tape is not None else -1, math.nan, "negative base")
    try:
        v = av ** bv
    except (OverflowError, ZeroDivisionError):
        v = math.inf
    if isinstance(a, Var):
        if isinstance(b, Var):
            tape = _tape_of(a, b)
            if not math.isfinite(v):
                raise NonFiniteValueError("pow", len(tape), v)
            return tape.push("pow", v, (a.index, b.index), (bv * av ** (bv - 1.0), v * math.log(av)))
        if not math.isfinite(v):
            raise NonFiniteValueError("pow", len(a.tape), v)
        d = 0.0 if bv == 0.0 else bv * av ** (bv - 1.0)
        return a.tape.push("pow", v, (a.index,), (d,))
    if isinstance(b, Var):
        if not math.isfinite(v):
            raise NonFiniteValueError("pow", len(b.tape), v)
        return b.tape.push("pow", v, (b.index,), (v * math.log(av),))
    return _checked("pow", v)


# Unary primitives ----------------------------------------------------------

def _unary(
    kind: str,
    x: Scalar,
    fn: Callable[[float], float],
    dfn: Callable[[float, float], float],
) -> Scalar:
    xv = value_of(x)
    try:
        v = fn(xv)
    except (ValueError, OverflowError, ZeroDivisionError):
        v = math.nan
    if not isinstance(x, Var):
        return _checked(kind, v)
    tape = x.tape
    if not math.isfinite(v):
        raise NonFiniteValueError(kind, len(tape), v)
    try:
        d = dfn(xv, v)
    except (ValueError, OverflowError, ZeroDivisionError):
        d = math.nan
    if not math.isfinite(d):
        raise NonFiniteValueError(kind, len(tape), d, "non-finite local partial")
    return tape.push(kind, v, (x.index,), (d,))


def _log(x: float) -> float:
    if x <= 0.0:
        raise ValueError(x)
    return math.log(x)


def _softplus(x: float) -> float:
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def _expit(x: float) -> float:
    return float(special.expit(x))


def _lgamma(x: float) -> float:
    if x <= 0.0:
        raise ValueError(x)
    return float(special.gammaln(x))


def _digamma(x: float) -> float:
    return float(special.digamma(x))


def exp(x: Scalar) -> Scalar:
    return _unary("exp", x, math.exp, lambda xv, v: v)


def log(x: Scalar) -> Scalar:
    return _unary("log", x, _log, lambda xv, v: 1.0 / xv)


def log1p(x: Scalar) -> Scalar:
    return _unary("log1p", x, math.log1p, lambda xv, v: 1.0 / (1.0 + xv))


def sqrt(x: Scalar) -> Scalar:
    return _unary("sqrt", x, math.sqrt, lambda xv, v: 0.5 / v)


def tanh(x: Scalar) -> Scalar:
    return _unary("tanh", x, math.tanh, lambda xv, v: 1.0 - v * v)


def logistic(x: Scalar) -> Scalar:
    return _unary("logistic", x, _expit, lambda xv, v: v * (1.0 - v))


def softplus(x: Scalar) -> Scalar:
    """``log(1 + exp(x))`` without overflow."""
    return _unary("softplus", x, _softplus, lambda xv, v: _expit(xv))


def lgamma(x: Scalar) -> Scalar:
    """Log-gamma on the positive reals; derivative is the digamma function."""
    return _unary("lgamma", x, _lgamma, lambda xv, v: _digamma(xv))


# N-ary nodes ---------------------------------------------------------------

def _first_tape(xs: Sequence[Scalar]):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def sum_all(xs: Iterable[Scalar]) -> Scalar:
    """Sum of many terms recorded as a single node."""
    xs = list(xs)
    tape = _first_tape(xs)
    total = 0.0
    if tape is None:
        for x in xs:
            total += float(x)
        return _checked("sum", total)
    operands = []
    for x in xs:
        if isinstance(x, Var):
            total += x.tape.values[x.index]
            operands.append(x.index)
        else:
            total += float(x)
    return tape.push("sum", total, tuple(operands), (1.0,) * len(operands))


def dot(coefficients: Sequence[float], xs: Sequence[Scalar]) -> Scalar:
    """Linear combination ``sum_i c_i * x_i`` with constant coefficients."""
    tape = _first_tape(xs)
    total = 0.0
    if tape is None:
        for c, x in zip(coefficients, xs):
            total += float(c) * float(x)
        return _checked("dot", total)
    operands = []
    partials = []
    values = tape.values
    for c, x in zip(coefficients, xs):
        c = float(c)
        if isinstance(x, Var):
            total += c * values[x.index]
            operands.append(x.index)
            partials.append(c)
        else:
            total += c * float(x)
    return tape.push("dot", total, tuple(operands), tuple(partials))


def inner(xs: Sequence[Scalar], ys: Sequence[Scalar]) -> Scalar:
    """``sum_i x_i * y_i`` where both sides may be Vars."""
    if len(xs) != len(ys):
        raise ValueError(f"inner product of lengths {len(xs)} and {len(ys)}")
    tape = _first_tape(xs)
    if tape is None:
        tape = _first_tape(ys)
    xv = [value_of(x) for x in xs]
    yv = [value_of(y) for y in ys]
    total = 0.0
    for a, b in zip(xv, yv):
        total += a * b
    if tape is None:
        return _checked("inner", total)
    operands = []
    partials = []
    for x, y, a, b in zip(xs, ys, xv, yv):
        if isinstance(x, Var):
            operands.append(x.index)
            partials.append(b)
        if isinstance(y, Var):
            operands.append(y.index)
            partials.append(a)
    return tape.push("inner", total, tuple(operands), tuple(partials))


def sum_squares(xs: Sequence[Scalar]) -> Scalar:
    """``sum_i x_i^2`` as one node."""
    xs = list(xs)
    tape = _first_tape(xs)
    vals = [value_of(x) for x in xs]
    total = 0.0
    for v in vals:
        total += v * v
    if tape is None:
        return _checked("sum_squares", total)
    operands = []
    partials = []
    for x, v in zip(xs, vals):
        if isinstance(x, Var):
            operands.append(x.index)
            partials.append(2.0 * v)
    return tape.push("sum_squares", total, tuple(operands), tuple(partials))


def log_sum_exp(xs: Sequence[Scalar]) -> Scalar:
    """``log(sum(exp(x)))`` shifted by the maximum for stability."""
    xs = list(xs)
    if not xs:
        raise ValueError("log_sum_exp of an empty sequence")
    vals = [value_of(x) for x in xs]
    m = max(vals)
    if not math.isfinite(m):
        raise NonFiniteValueError("log_sum_exp", -1, m)
    total = 0.0
    for v in vals:
        total += math.exp(v - m)
    result = m + math.log(total)
    tape = _first_tape(xs)
    if tape is None:
        return _checked("log_sum_exp", result)
    operands = []
    partials = []
    for x, v in zip(xs, vals):
        if isinstance(x, Var):
            operands.append(x.index)
            partials.append(math.exp(v - result))
    return tape.push("log_sum_exp", result, tuple(operands), tuple(partials))


PRIMITIVES: Dict[str, Callable[..., Scalar]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "exp": exp,
    "log": log,
    "log1p": log1p,
    "sqrt": sqrt,
    "tanh": tanh,
    "pow": power,
    "logistic": logistic,
    "softplus": softplus,
    "lgamma": lgamma,
    "log_sum_exp": lambda *args: log_sum_exp(args),
    "sum": lambda *args: sum_all(args),
    "sum_squares": lambda *args: sum_squares(args),
}


def primitive(op: str, *args: Scalar) -> Scalar:
    """Apply a primitive by name."""
    try:
        fn = PRIMITIVES[op]
    except KeyError:
        raise ValueError(f"unknown primitive '{op}'") from None
    return fn(*args)


# Reverse sweep -------------------------------------------------------------

def gradient(tape: Tape, output: Scalar, inputs: Sequence[Var]) -> np.ndarray:
    """Reverse-accumulate d(output)/d(input_i) for every input.

    Inputs that do not influence the output, and constant outputs, get 0.
    """
    grads = np.zeros(len(inputs))
    if not isinstance(output, Var):
        return grads
    if output.tape is not tape:
        raise ValueError("output was not recorded on this tape")
    last = output.index
    adjoint = [0.0] * (last + 1)
    adjoint[last] = 1.0
    operands = tape.operands
    partials = tape.partials
    for i in range(last, -1, -1):
        a = adjoint[i]
        if a == 0.0:
            continue
        for j, p in zip(operands[i], partials[i]):
            adjoint[j] += a * p
    for k, var in enumerate(inputs):
        if var.tape is not tape:
            raise ValueError("input was not recorded on this tape")
        if var.index <= last:
            grads[k] = adjoint[var.index]
    return grads


def value_and_grad(fn: Callable[[List[Var]], Scalar], x: Sequence[float]) -> Tuple[float, np.ndarray]:
    """Evaluate ``fn`` on fresh input Vars and return its value and gradient."""
    tape = Tape()
    inputs = tape.variables(x)
    out = fn(inputs)
    return value_of(out), gradient(tape, out, inputs)
