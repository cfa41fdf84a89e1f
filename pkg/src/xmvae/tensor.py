"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`GradientTape` is active are recorded on
it; :func:`backward` replays the record in reverse and accumulates gradients
into every reachable :class:`Parameter`. Outside a tape, ops are plain
forward computations and are safe to call from several threads.

    with GradientTape() as tape:
        loss = tsum(square(matmul(x, w)))
    grads = backward(loss, tape)
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import DomainError, ShapeError, TapeError


class Tensor:
    """Immutable float64 array with shape metadata."""

    __slots__ = ("data", "requires_grad", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool = False) -> "Tensor":
        t = cls.__new__(cls)
        if not isinstance(arr, np.ndarray):
            arr = np.asarray(arr, dtype=np.float64)
        arr.flags.writeable = False
        t.data = arr
        t.requires_grad = requires_grad
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, data={self.data!r})"

    def __add__(self, other):
        return add(self, as_tensor(other))

    def __sub__(self, other):
        return subtract(self, as_tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return multiply(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """Trainable tensor owned by one model; mutated only by the optimizer.

    Carries its accumulated gradient and the Adam moment state.
    """

    __slots__ = ("name", "grad", "m", "v", "t")

    def __init__(self, data, name: str = ""):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = True
        self.name = name
        self.grad = np.zeros_like(arr)
        self.m = np.zeros_like(arr)
        self.v = np.zeros_like(arr)
        self.t = 0

    def assign(self, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.data.shape:
            raise ShapeError(f"cannot assign shape {values.shape} to parameter {self.name} {self.shape}")
        self.data[...] = values

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_local = threading.local()


def _active_tape():
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class _Record:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class GradientTape:
    """Ordered record of primitive ops executed while the tape is active."""

    def __init__(self):
        self.records: list[_Record] = []
        self.consumed = False

    def __enter__(self):
        if self.consumed:
            raise TapeError("tape already consumed")
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def __len__(self):
        return len(self.records)


def _emit(out: np.ndarray, inputs: Sequence[Tensor], grad_fn: Callable) -> Tensor:
    tape = _active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    result = Tensor._wrap(out, requires_grad=needs)
    if needs:
        tape.records.append(_Record(result, tuple(inputs), grad_fn))
    return result


def backward(loss: Tensor, tape: GradientTape) -> dict:
    """Accumulate d(loss)/d(param) into ``param.grad`` for every reachable Parameter.

    Returns a map from each reachable parameter to the gradient contributed
    by this call. The tape cannot be replayed twice.
    """
    if tape.consumed:
        raise TapeError("tape already consumed")
    if loss.size != 1 or loss.data.ndim > 1:
        raise TapeError(f"loss must be a scalar, got shape {loss.shape}")
    tape.consumed = True
    grads = {id(loss): np.ones_like(loss.data)}
    found: dict[int, Parameter] = {}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.out), None)
        if g is None:
            continue
        in_grads = rec.backward(g)
        for inp, ig in zip(rec.inputs, in_grads):
            if ig is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig
            if isinstance(inp, Parameter):
                found[key] = inp
    tape.records = []
    out = {}
    for key, p in found.items():
        g = grads[key]
        p.grad += g
        out[p] = g
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    return _emit(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def subtract(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("subtract", a, b)
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def multiply(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("multiply", a, b)
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _emit(a.data + c, (a,), lambda g: (g,))


def relu(a: Tensor) -> Tensor:
    ad = a.data
    return _emit(kernels.relu_forward(ad), (a,), lambda g: (kernels.relu_backward(ad, g),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _emit(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    if np.any(ad <= 0):
        raise DomainError("log of non-positive value")
    return _emit(np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a: Tensor) -> Tensor:
    ad = a.data
    if np.any(ad < 0):
        raise DomainError("sqrt of negative value")
    out = np.sqrt(ad)
    return _emit(out, (a,), lambda g: (g * 0.5 / out,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _emit(ad * ad, (a,), lambda g: (2.0 * ad * g,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only where the input is inside the interval."""
    ad = a.data
    inside = (ad >= lo) & (ad <= hi)
    return _emit(np.clip(ad, lo, hi), (a,), lambda g: (np.where(inside, g, 0.0),))


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    """Sum of all elements, or over the last axis when ``axis=-1``."""
    shape = a.shape
    if axis is None:
        return _emit(np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))
    if axis not in (-1, a.data.ndim - 1):
        raise ShapeError("sum supports axis=None or the last axis only")
    out = a.data.sum(axis=-1)
    return _emit(out, (a,), lambda g: (np.broadcast_to(g[..., None], shape).copy(),))


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.size if axis is None else a.shape[-1]
    return scale(tsum(a, axis), 1.0 / n)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    if not parts:
        raise ShapeError("concat of nothing")
    lead = parts[0].shape[:-1]
    for p in parts:
        if p.shape[:-1] != lead:
            raise ShapeError(f"concat: leading shapes {lead} and {p.shape[:-1]} differ")
    widths = [p.shape[-1] for p in parts]
    cuts = np.cumsum(widths)[:-1]
    out = np.concatenate([p.data for p in parts], axis=-1)
    return _emit(out, tuple(parts), lambda g: tuple(np.split(g, cuts, axis=-1)))


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    width = a.shape[-1]
    if not 0 <= start < stop <= width:
        raise ShapeError(f"slice [{start}:{stop}] out of range for width {width}")
    shape = a.shape

    def grad(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return _emit(a.data[..., start:stop].copy(), (a,), grad)


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add a bias vector to every row of a [batch x n] tensor."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"bias_add: cannot add bias {b.shape} to {x.shape}")
    return _emit(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)))


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return bias_add(matmul(x, w), b)


_DISPATCH = {
    "matmul": matmul,
    "add": add,
    "subtract": subtract,
    "elementwise-multiply": multiply,
    "relu": relu,
    "exp": exp,
    "log": log,
    "square": square,
    "sum": tsum,
    "mean": mean,
    "concat-last-axis": lambda *ts: concat(ts),
    "slice-last-axis": slice_last,
    "broadcast-add-bias": bias_add,
}


def forward_primitive(kind: str, *inputs, **kwargs) -> Tensor:
    """Run a primitive by name (``"matmul"``, ``"relu"``, ``"broadcast-add-bias"``, ...)."""
    try:
        fn = _DISPATCH[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    return fn(*[as_tensor(t) if not isinstance(t, (int, float)) else t for t in inputs], **kwargs)
