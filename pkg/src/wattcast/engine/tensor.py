"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation records its parents and one vector-Jacobian product per
parent; `backward` walks the resulting DAG once in reverse topological
order. Graph recording is skipped entirely when no input requires a
gradient or inside a `no_grad()` block, so inference costs no memory.

All arithmetic is 64-bit and single-threaded numpy, hence bit-reproducible
for fixed inputs.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """An operation received incompatible shapes."""


class EngineError(RuntimeError):
    """A numeric failure surfaced by the engine (e.g. non-finite loss)."""


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    """A float64 array plus an optional backward recipe."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjps")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        vjps: tuple[Callable[[np.ndarray], np.ndarray] | None, ...] = (),
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._vjps = vjps

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # arithmetic sugar; the op functions below do the real work
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)


class Param(Tensor):
    """A trainable tensor with a stable identifier for checkpoints."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.shape})"


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _tracing(*parents: Tensor) -> bool:
    return _GRAD_ENABLED and any(p.requires_grad for p in parents)


def _node(data, parents: Sequence[Tensor], vjps: Sequence) -> Tensor:
    return Tensor(data, requires_grad=True, parents=tuple(parents), vjps=tuple(vjps))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to `shape` undoing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return np.asarray(g).reshape(shape)


# --- elementwise and linear ops ------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from None
    if not _tracing(a, b):
        return Tensor(out)
    return _node(
        out,
        (a, b),
        (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}") from None
    if not _tracing(a, b):
        return Tensor(out)
    return _node(
        out,
        (a, b),
        (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from None
    if not _tracing(a, b):
        return Tensor(out)
    return _node(
        out,
        (a, b),
        (
            lambda g: _unbroadcast(g * b.data, a.shape),
            lambda g: _unbroadcast(g * a.data, b.shape),
        ),
    )


def matmul(a, b) -> Tensor:
    """(..., n) @ (n, m); the right operand must be a matrix."""
    a, b = _wrap(a), _wrap(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data
    if not _tracing(a, b):
        return Tensor(out)
    n, m = b.shape

    def vjp_a(g):
        return g @ b.data.T

    def vjp_b(g):
        return a.data.reshape(-1, n).T @ g.reshape(-1, m)

    return _node(out, (a, b), (vjp_a, vjp_b))


def sum_(a) -> Tensor:
    """Full reduction to a scalar."""
    a = _wrap(a)
    out = a.data.sum()
    if not _tracing(a):
        return Tensor(out)
    return _node(out, (a,), (lambda g: np.full(a.shape, float(g)),))


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    # overflow-safe: exp of a non-positive argument only
    z = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    if not _tracing(a):
        return Tensor(out)
    return _node(out, (a,), (lambda g: g * out * (1.0 - out),))


def tanh_(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.data)
    if not _tracing(a):
        return Tensor(out)
    return _node(out, (a,), (lambda g: g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = _wrap(a)
    out = np.maximum(a.data, 0.0)
    if not _tracing(a):
        return Tensor(out)
    mask = a.data > 0
    return _node(out, (a,), (lambda g: g * mask,))


def dropout(a, rate: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-rate) so eval is identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    a = _wrap(a)
    if not train or rate == 0.0:
        return a
    factor = (rng.random(a.shape) >= rate) / (1.0 - rate)
    out = a.data * factor
    if not _tracing(a):
        return Tensor(out)
    return _node(out, (a,), (lambda g: g * factor,))


# --- shape ops -------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    if not _tracing(a):
        return Tensor(out)
    return _node(out, (a,), (lambda g: g.reshape(a.shape),))


def slice_(a, key) -> Tensor:
    """Basic slicing/integer indexing; the adjoint scatters into zeros."""
    a = _wrap(a)
    out = a.data[key]
    if not _tracing(a):
        return Tensor(out)

    def vjp(g):
        z = np.zeros(a.shape)
        z[key] = g
        return z

    return _node(out, (a,), (vjp,))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = [_wrap(t) for t in tensors]
    if not parts:
        raise ShapeError("concat: need at least one tensor")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        shapes = [p.shape for p in parts]
        raise ShapeError(f"concat: incompatible shapes {shapes} on axis {axis}") from None
    if not _tracing(*parts):
        return Tensor(out)

    vjps = []
    offset = 0
    for p in parts:
        width = p.shape[axis]
        lo = offset

        def vjp(g, lo=lo, hi=lo + width):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return g[tuple(index)]

        vjps.append(vjp)
        offset += width
    return _node(out, parts, vjps)


# --- sequence ops ----------------------------------------------------------


def conv1d(x, w, b=None, dilation: int = 1) -> Tensor:
    """Causal 1-D convolution over (batch, time, channels), stride 1.

    The input is left-padded with (k - 1) * dilation zeros so the output has
    the input's length and out[:, t] depends only on x[:, :t + 1].
    """
    x, w = _wrap(x), _wrap(w)
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(f"conv1d: expected 3-D input and kernel, got {x.shape} and {w.shape}")
    k, c_in, c_out = w.shape
    if x.shape[2] != c_in:
        raise ShapeError(f"conv1d: input channels {x.shape[2]} != kernel channels {c_in}")
    if dilation < 1:
        raise ValueError(f"conv1d: dilation must be >= 1, got {dilation}")
    bias = _wrap(b) if b is not None else None
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv1d: bias shape {bias.shape} != ({c_out},)")

    batch, t_len, _ = x.shape
    pad = (k - 1) * dilation
    xp = np.pad(x.data, ((0, 0), (pad, 0), (0, 0)))
    out = np.zeros((batch, t_len, c_out))
    for j in range(k):
        out += xp[:, j * dilation : j * dilation + t_len, :] @ w.data[j]
    if bias is not None:
        out += bias.data

    parents = (x, w) if bias is None else (x, w, bias)
    if not _tracing(*parents):
        return Tensor(out)

    def vjp_x(g):
        gp = np.zeros_like(xp)
        for j in range(k):
            gp[:, j * dilation : j * dilation + t_len, :] += g @ w.data[j].T
        return gp[:, pad:, :]

    def vjp_w(g):
        return np.stack(
            [
                np.einsum("bti,bto->io", xp[:, j * dilation : j * dilation + t_len, :], g)
                for j in range(k)
            ]
        )

    vjps = [vjp_x, vjp_w]
    if bias is not None:
        vjps.append(lambda g: g.sum(axis=(0, 1)))
    return _node(out, parents, vjps)


def _pool_view(x: Tensor, size: int, op: str):
    if x.ndim != 3:
        raise ShapeError(f"{op}: expected (batch, time, channels), got {x.shape}")
    if size < 1:
        raise ValueError(f"{op}: size must be >= 1, got {size}")
    batch, t_len, channels = x.shape
    t_out = t_len // size
    if t_out == 0:
        raise ShapeError(f"{op}: window {size} longer than sequence {t_len}")
    tiles = x.data[:, : t_out * size, :].reshape(batch, t_out, size, channels)
    return tiles, batch, t_len, t_out, channels


def maxpool1d(x, size: int = 2) -> Tensor:
    """Non-overlapping max pooling along time; a trailing remainder is dropped."""
    x = _wrap(x)
    tiles, batch, t_len, t_out, channels = _pool_view(x, size, "maxpool1d")
    out = tiles.max(axis=2)
    if not _tracing(x):
        return Tensor(out)
    winner = tiles.argmax(axis=2)

    def vjp(g):
        z = np.zeros((batch, t_out, size, channels))
        np.put_along_axis(z, winner[:, :, None, :], g[:, :, None, :], axis=2)
        full = np.zeros((batch, t_len, channels))
        full[:, : t_out * size, :] = z.reshape(batch, t_out * size, channels)
        return full

    return _node(out, (x,), (vjp,))


def avgpool1d(x, size: int = 2) -> Tensor:
    x = _wrap(x)
    tiles, batch, t_len, t_out, channels = _pool_view(x, size, "avgpool1d")
    out = tiles.mean(axis=2)
    if not _tracing(x):
        return Tensor(out)

    def vjp(g):
        spread = np.broadcast_to(
            (g / size)[:, :, None, :], (batch, t_out, size, channels)
        )
        full = np.zeros((batch, t_len, channels))
        full[:, : t_out * size, :] = spread.reshape(batch, t_out * size, channels)
        return full

    return _node(out, (x,), (vjp,))


# --- loss -------------------------------------------------------------------


def mse_loss(pred, target) -> Tensor:
    """Mean squared error as a scalar; rejects non-finite results."""
    pred, target = _wrap(pred), _wrap(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} != target {target.shape}")
    diff = pred.data - target.data
    out = np.mean(diff * diff) if diff.size else np.float64(0.0)
    if not np.isfinite(out):
        raise EngineError("mse_loss: non-finite loss (NaN/inf propagated through the model)")
    if not _tracing(pred, target):
        return Tensor(out)
    n = max(diff.size, 1)

    def vjp_pred(g):
        return (2.0 / n) * float(g) * diff

    def vjp_target(g):
        return (-2.0 / n) * float(g) * diff

    return _node(np.float64(out), (pred, target), (vjp_pred, vjp_target))


# --- backward pass -----------------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Sequence[Param] | None = None) -> None:
    """Populate .grad on every tensor that requires one, from a scalar loss.

    Gradients accumulate across calls until cleared. When `params` is given,
    parameters unreachable from the loss get explicit zero gradients.
    """
    if loss.data.size != 1:
        raise EngineError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _toposort(loss)
    seed = np.ones_like(loss.data)
    loss.grad = seed if loss.grad is None else loss.grad + seed
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in zip(node._parents, node._vjps):
            if vjp is None or not parent.requires_grad:
                continue
            contribution = vjp(g)
            parent.grad = (
                contribution if parent.grad is None else parent.grad + contribution
            )
        if node._parents:
            node.grad = None  # free intermediate gradients as soon as consumed
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
