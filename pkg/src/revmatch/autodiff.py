"""Dense tensors with tape-based reverse-mode differentiation.

Only the operations the encoder and the contrastive objective need are
provided. Every op records its parents and a closure that pushes the
output gradient back to them; :func:`backward` walks the recorded graph in
reverse topological order.

Ops whose inputs do not require gradients record nothing, so inference
through the same code path builds no graph.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64
GELU_COEF = math.sqrt(2.0 / math.pi)
MASK_VALUE = -1e9  # additive key mask; exp() underflows to exactly 0


class ShapeError(ValueError):
    pass


class Tensor:
    """An immutable array value plus the bookkeeping for its backward pass."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor],
          backward: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_data = a.data + b.data

    def _bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), _bw)


def neg(a: Tensor) -> Tensor:
    def _bw(g):
        _accumulate(a, -g)

    return _make(-a.data, (a,), _bw)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_data = a.data * b.data

    def _bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), _bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def _bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(out_data, (a, b), _bw)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = np.sum(a.data, axis=axis, keepdims=keepdims)

    def _bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make(np.asarray(out_data), (a,), _bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(a: Tensor, shape) -> Tensor:
    def _bw(g):
        _accumulate(a, g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), _bw)


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))

    def _bw(g):
        _accumulate(a, np.transpose(g, inverse))

    return _make(np.transpose(a.data, axes), (a,), _bw)


def broadcast_to(a: Tensor, shape) -> Tensor:
    def _bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))

    return _make(np.broadcast_to(a.data, shape), (a,), _bw)


def getitem(a: Tensor, index) -> Tensor:
    def _bw(g):
        if not a.requires_grad:
            return
        full = np.zeros_like(a.data)
        if _is_basic_index(index):
            full[index] = g
        else:
            np.add.at(full, index, g)
        _accumulate(a, full)

    return _make(np.asarray(a.data[index]), (a,), _bw)


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis
               for i in parts)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def _bw(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accumulate(t, g[tuple(sl)])

    return _make(out_data, tensors, _bw)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]``; gradients scatter-add back into the table."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"token id out of range [0, {table.shape[0]}): min={ids.min()} max={ids.max()}")

    def _bw(g):
        if not table.requires_grad:
            return
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        _accumulate(table, full)

    return _make(table.data[ids], (table,), _bw)


# ---------------------------------------------------------------------------
# fused kernels
# ---------------------------------------------------------------------------

def softmax_rows(m, mask_add: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis with row-max subtraction.

    ``mask_add`` is a constant added before normalization (0 for visible
    keys, :data:`MASK_VALUE` for hidden ones).
    """
    m = _lift(m)
    if m.shape[-1] < 1:
        raise ShapeError(f"softmax needs at least one column, got shape {m.shape}")
    z = m.data if mask_add is None else m.data + mask_add
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def _bw(g):
        _accumulate(m, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _make(y, (m,), _bw)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis with the population variance."""
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out_data = xhat * gamma.data + beta.data

    def _bw(g):
        lead = tuple(range(g.ndim - 1))
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=lead))
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=lead))
        if x.requires_grad:
            dxhat = g * gamma.data
            dx = inv_std * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
            _accumulate(x, dx)

    return _make(out_data, (x, gamma, beta), _bw)


def gelu(x) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    x = _lift(x)
    u = GELU_COEF * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(u)
    out_data = 0.5 * x.data * (1.0 + t)

    def _bw(g):
        du = GELU_COEF * (1.0 + 3 * 0.044715 * x.data ** 2)
        _accumulate(x, g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du))

    return _make(out_data, (x,), _bw)


def logsumexp(x, axis: int = -1, mask_add: np.ndarray | None = None) -> Tensor:
    x = _lift(x)
    z = x.data if mask_add is None else x.data + mask_add
    zmax = z.max(axis=axis, keepdims=True)
    e = np.exp(z - zmax)
    s = e.sum(axis=axis, keepdims=True)
    out_data = np.squeeze(zmax + np.log(s), axis=axis)

    def _bw(g):
        _accumulate(x, np.expand_dims(g, axis) * (e / s))

    return _make(out_data, (x,), _bw)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` with every node after its inputs."""
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


def backward(loss: Tensor, params: Iterable[Tensor] | None = None,
             seed: float | np.ndarray = 1.0) -> dict[str, np.ndarray]:
    """Propagate ``d loss`` to every node and collect leaf gradients.

    Returns a map from parameter name to gradient. Parameters that the loss
    does not depend on get zero gradients.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar terminal node, got shape {loss.shape}")
    order = topological_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.full(loss.shape, seed, dtype=loss.data.dtype)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            if node is not loss:
                node.grad = None  # free interior buffers
    grads: dict[str, np.ndarray] = {}
    if params is not None:
        for i, p in enumerate(params):
            key = p.name if p.name is not None else str(i)
            grads[key] = p.grad if p.grad is not None else np.zeros_like(p.data)
    return grads


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
