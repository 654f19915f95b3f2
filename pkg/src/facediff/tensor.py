"""Reverse-mode automatic differentiation over numpy float64 arrays.

A Tensor wraps an ndarray and remembers how it was produced; backward()
walks the graph in reverse topological order and accumulates gradients
into every ancestor that requires them. Graphs are built eagerly per
forward pass and freed once the last reference drops. A graph instance
must stay on one thread; parameters may be shared across threads as long
as only one thread mutates them.

Gradients accumulate across backward() calls by design: callers zero them
explicitly between optimizer steps.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Skip graph construction inside the block (evaluation, generation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Float64 n-d array participating in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[np.ndarray], tuple] | None = None

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

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Populate .grad on every requires_grad ancestor of a scalar loss.

        Repeated calls without zeroing accumulate into .grad.
        """
        if self.data.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("backward on a tensor that does not require grad")
        # Iterative DFS post-order: graphs can be thousands of nodes deep.
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        flowing: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            grad = flowing.pop(id(node), None)
            if grad is None:
                continue
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += grad
            if node._backward_fn is None:
                continue
            parent_grads = node._backward_fn(grad)
            for parent, pgrad in zip(node._parents, parent_grads):
                if pgrad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in flowing:
                    flowing[key] = flowing[key] + pgrad
                else:
                    flowing[key] = pgrad

    # operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return add(self, neg(_coerce(other)))

    def __rsub__(self, other):
        return add(_coerce(other), neg(self))

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return mul(self, Tensor(1.0 / other))
        return mul(self, power(_coerce(other), -1.0))

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, _coerce(other))

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int]):
        return transpose(self, tuple(axes))

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def sum(self, axis=None, keepdims: bool = False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def broadcast_to(self, shape):
        return broadcast_to(self, tuple(shape))


def _coerce(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _op(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


# elementwise ------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)
    return _op(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    def backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)
    return _op(data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _op(-a.data, (a,), lambda g: (-g,))


def power(a: Tensor, exponent: float) -> Tensor:
    data = a.data ** exponent
    def backward(g):
        return (g * exponent * a.data ** (exponent - 1.0),)
    return _op(data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)
    return _op(data, (a,), lambda g: (g * data,))


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)
    return _op(data, (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)
    return _op(data, (a,), lambda g: (g * 0.5 / data,))


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)
    return _op(data, (a,), lambda g: (g * (1.0 - data * data),))


def sigmoid(a: Tensor) -> Tensor:
    data = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                    np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    return _op(data, (a,), lambda g: (g * data * (1.0 - data),))


def softplus(a: Tensor) -> Tensor:
    # log(1 + exp(x)) computed without overflow for large |x|
    data = np.logaddexp(0.0, a.data)
    def backward(g):
        s = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                     np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
        return (g * s,)
    return _op(data, (a,), backward)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """Smooth tanh-form gelu; smoothness keeps finite-difference checks clean."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)
    def backward(g):
        sech2 = 1.0 - t * t
        d = 0.5 * (1.0 + t) + 0.5 * x * sech2 * _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        return (g * d,)
    return _op(data, (a,), backward)


# structural -------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batch semantics on leading dims."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dims disagree: {a.shape} vs {b.shape}")
    data = a.data @ b.data
    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)
    return _op(data, (a, b), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)
    return _op(data, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    data = a.data.transpose(axes)
    inverse = tuple(np.argsort(axes))
    return _op(data, (a,), lambda g: (g.transpose(inverse),))


def getitem(a: Tensor, index) -> Tensor:
    """Basic indexing (ints, slices, Ellipsis); duplicate-free by construction."""
    data = a.data[index]
    def backward(g):
        full = np.zeros_like(a.data)
        full[index] += g
        return (full,)
    return _op(data, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [t for t in tensors]
    data = np.concatenate([t.data for t in parts], axis=axis)
    sizes = [t.shape[axis] for t in parts]
    splits = np.cumsum(sizes)[:-1]
    def backward(g):
        return tuple(np.split(g, splits, axis=axis))
    return _op(data, tuple(parts), backward)


def broadcast_to(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = np.broadcast_to(a.data, shape).copy()
    return _op(data, (a,), lambda g: (unbroadcast(g, a.shape),))


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)
    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        g_k = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_k, a.shape).copy(),)
    return _op(data, (a,), backward)


def tensor_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        count = a.shape[axis]
    summed = tensor_sum(a, axis=axis, keepdims=keepdims)
    return mul(summed, Tensor(1.0 / count))


def gather_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """table[ids] for an integer id array; rows may repeat, grads accumulate."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"row id out of range for table with {table.shape[0]} rows")
    data = table.data[ids]
    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (full,)
    return _op(data, (table,), backward)


def gather_last(a: Tensor, ids: np.ndarray) -> Tensor:
    """out[..., ] = a[..., ids[...]] taking one element along the last axis."""
    ids = np.asarray(ids)
    if ids.shape != a.shape[:-1]:
        raise DimensionError(f"gather_last ids {ids.shape} do not match {a.shape[:-1]}")
    data = np.take_along_axis(a.data, ids[..., None], axis=-1)[..., 0]
    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, ids[..., None], g[..., None], axis=-1)
        return (full,)
    return _op(data, (a,), backward)


# normalizing ------------------------------------------------------------

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax: rows sum to one, extreme logits do not overflow."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)
    def backward(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        return (p * (g - dot),)
    return _op(p, (a,), backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse
    p = np.exp(data)
    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)
    return _op(data, (a,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm gain/bias must be ({d},), got {gain.shape} and {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    data = xhat * gain.data + bias.data
    def backward(g):
        dgain = (g * xhat).reshape(-1, d).sum(axis=0)
        dbias = g.reshape(-1, d).sum(axis=0)
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, dgain, dbias
    return _op(data, (x, gain, bias), backward)


# gradient checking ------------------------------------------------------

@dataclass
class GradCheckReport:
    """Outcome of one analytic-vs-numeric gradient comparison."""
    op_name: str
    n_coords: int
    max_rel_error: float
    step_size: float
    tolerance: float
    passed: bool

    def __str__(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return (f"{self.op_name}: {status}  max_rel_err={self.max_rel_error:.3e} "
                f"coords={self.n_coords} step={self.step_size:g}")


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5,
               tol: float = 1e-4, op_name: str = "fn",
               max_coords_per_param: int | None = None,
               seed: int = 0, scale_floor: float = 1e-8) -> GradCheckReport:
    """Compare backward() gradients of a scalar f() against central differences.

    f must rebuild its graph from the live `params` tensors on every call so
    that in-place perturbation of param.data is observed. When a parameter has
    more coordinates than max_coords_per_param, a seeded subsample is checked.

    Per-coordinate error is |a - n| / max(|a|, |n|, scale_floor). The floor
    exists because the difference quotient of a function of magnitude F
    carries roughly F*eps/step absolute roundoff, so gradients below that
    noise cannot be certified in relative terms by any correct backward;
    coordinates under the floor are held to |a - n| <= scale_floor * tol
    instead, which still trips on any systematic error above the noise.
    """
    for p in params:
        p.zero_grad()
    out = f()
    if out.size != 1:
        raise ContractError("grad_check requires a scalar-valued function")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    n_checked = 0
    finite = True
    for p, a in zip(params, analytic):
        flat = p.data.flat
        idx = np.arange(p.data.size)
        if max_coords_per_param is not None and p.data.size > max_coords_per_param:
            idx = np.sort(rng.choice(p.data.size, size=max_coords_per_param, replace=False))
        a_flat = a.reshape(-1)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + step
            with no_grad():
                hi = f().item()
            flat[i] = keep - step
            with no_grad():
                lo = f().item()
            flat[i] = keep
            numeric = (hi - lo) / (2.0 * step)
            if not math.isfinite(numeric):
                finite = False
                continue
            denom = max(abs(a_flat[i]), abs(numeric), scale_floor)
            max_rel = max(max_rel, abs(a_flat[i] - numeric) / denom)
            n_checked += 1
    passed = finite and max_rel <= tol
    if not finite:
        max_rel = math.inf
    return GradCheckReport(op_name=op_name, n_coords=n_checked, max_rel_error=max_rel,
                           step_size=step, tolerance=tol, passed=passed)
