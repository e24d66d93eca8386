"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough tape-based autodiff for the transformer blocks, poolers and
losses in this package: broadcasting elementwise ops, (batched) matmul,
reductions, softmax/log-softmax, gathers and cumulative sums. Backward
passes are hand-derived per primitive; composite layers are built from
these in ``nn``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the context."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` after a broadcasting forward op."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")
    __array_priority__ = 100  # keep numpy from hijacking reflected ops

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]] | None = None

    # ---- construction helpers -------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"],
              vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        track = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._vjp = vjp if track else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, grad={self.requires_grad})"

    # ---- backward ---------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.size != 1:
                raise ValueError("backward() without a gradient requires a scalar output")
            grad = np.ones_like(self.data)
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
            for p in node._parents:
                stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    def zero_grad(self) -> None:
        self.grad = None

    # ---- elementwise arithmetic --------------------------------------------

    def __add__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):  # scalars adopt the tensor dtype
            a = self
            return Tensor._make(a.data + other, (a,), lambda g: (g,))
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(a.data + b.data, (a, b),
                            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            return self + (-other)
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return (-self) + other if isinstance(other, (int, float)) \
            else as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            a = self
            return Tensor._make(a.data * other, (a,), lambda g: (g * other,))
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(a.data * b.data, (a, b),
                            lambda g: (_unbroadcast(g * b.data, a.shape),
                                       _unbroadcast(g * a.data, b.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            return self * (1.0 / other)
        other = as_tensor(other)
        a, b = self, other
        return Tensor._make(a.data / b.data, (a, b),
                            lambda g: (_unbroadcast(g / b.data, a.shape),
                                       _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))

    def __rtruediv__(self, other) -> "Tensor":
        a = self
        if isinstance(other, (int, float)):
            return Tensor._make(other / a.data, (a,),
                                lambda g: (-g * other / (a.data * a.data),))
        return as_tensor(other) / self

    def __pow__(self, p: float) -> "Tensor":
        if not np.isscalar(p):
            raise TypeError("only scalar exponents are supported")
        a = self
        return Tensor._make(a.data ** p, (a,),
                            lambda g: (g * p * a.data ** (p - 1),))

    # ---- matmul -------------------------------------------------------------

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def vjp(g: np.ndarray):
            ga = gb = None
            if a.requires_grad:
                if a.ndim == 1 and b.ndim == 1:
                    ga = g * b.data
                elif b.ndim == 1:  # (...,m,k) @ (k,) -> (...,m)
                    ga = _unbroadcast(np.expand_dims(g, -1) * b.data, a.shape)
                elif a.ndim == 1:  # (k,) @ (...,k,n) -> (...,n)
                    ga = _unbroadcast((b.data @ np.expand_dims(g, -1))[..., 0], a.shape)
                else:
                    ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
            if b.requires_grad:
                if a.ndim == 1 and b.ndim == 1:
                    gb = g * a.data
                elif a.ndim == 1:
                    gb = _unbroadcast(np.expand_dims(a.data, -1) * np.expand_dims(g, -2), b.shape)
                elif b.ndim == 1:
                    gb = _unbroadcast((np.swapaxes(a.data, -1, -2) @ np.expand_dims(g, -1))[..., 0],
                                      b.shape)
                else:
                    gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
            return ga, gb

        return Tensor._make(a.data @ b.data, (a, b), vjp)

    # ---- shape ops ------------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return Tensor._make(a.data.reshape(shape), (a,),
                            lambda g: (g.reshape(a.shape),))

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        a = self
        if not axes:
            axes = tuple(reversed(range(a.ndim)))
        inv = tuple(np.argsort(axes))
        return Tensor._make(a.data.transpose(axes), (a,),
                            lambda g: (g.transpose(inv),))

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def swapaxes(self, ax1: int, ax2: int) -> "Tensor":
        a = self
        return Tensor._make(np.swapaxes(a.data, ax1, ax2), (a,),
                            lambda g: (np.swapaxes(g, ax1, ax2),))

    def __getitem__(self, idx) -> "Tensor":
        a = self
        parts = idx if isinstance(idx, tuple) else (idx,)
        basic = all(isinstance(p, (int, np.integer, slice, type(Ellipsis), type(None)))
                    for p in parts)

        def vjp(g: np.ndarray):
            out = np.zeros_like(a.data)
            if basic:  # basic slices never alias
                out[idx] = g
            else:
                np.add.at(out, idx, g)
            return (out,)

        return Tensor._make(a.data[idx], (a,), vjp)

    # ---- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self

        def vjp(g: np.ndarray):
            if axis is None:
                return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=False),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, a.shape).astype(a.dtype, copy=False),)

        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.size if axis is None else np.prod(
            [self.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def cumsum(self, axis: int = -1) -> "Tensor":
        a = self
        return Tensor._make(np.cumsum(a.data, axis=axis), (a,),
                            lambda g: (np.flip(np.cumsum(np.flip(g, axis), axis), axis),))

    # ---- pointwise nonlinearities ----------------------------------------------

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)
        a = self
        return Tensor._make(out_data, (a,), lambda g: (g * out_data,))

    def log(self) -> "Tensor":
        a = self
        return Tensor._make(np.log(a.data), (a,), lambda g: (g / a.data,))

    def sqrt(self) -> "Tensor":
        out_data = np.sqrt(self.data)
        a = self
        return Tensor._make(out_data, (a,), lambda g: (g * (0.5 / out_data),))

    def tanh(self) -> "Tensor":
        out_data = np.tanh(self.data)
        a = self
        return Tensor._make(out_data, (a,), lambda g: (g * (1.0 - out_data * out_data),))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, requires_grad: bool = True) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=requires_grad)


# ---- free functions ---------------------------------------------------------


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g: np.ndarray):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(np.concatenate([t.data for t in ts], axis=axis), ts, vjp)


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]

    def vjp(g: np.ndarray):
        moved = np.moveaxis(g, axis, 0)
        return tuple(moved[i] for i in range(len(ts)))

    return Tensor._make(np.stack([t.data for t in ts], axis=axis), ts, vjp)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g: np.ndarray):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._make(y, (x,), vjp)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - logz

    def vjp(g: np.ndarray):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return Tensor._make(y, (x,), vjp)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU; the density term is deferred to backward."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))

    def vjp(g: np.ndarray):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return Tensor._make(x.data * cdf, (x,), vjp)


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Fused last-axis layer norm (the composite chain costs ~8 temporaries)."""
    x = as_tensor(x)
    gain = as_tensor(gain)
    shift = as_tensor(shift)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + shift.data

    def vjp(g: np.ndarray):
        red = tuple(range(g.ndim - 1))
        gx = None
        if x.requires_grad:
            dy = g * gain.data
            gx = inv * (dy - dy.mean(axis=-1, keepdims=True)
                        - xhat * (dy * xhat).mean(axis=-1, keepdims=True))
        gg = (g * xhat).sum(axis=red) if gain.requires_grad else None
        gb = g.sum(axis=red) if shift.requires_grad else None
        return gx, gg, gb

    return Tensor._make(out, (x, gain, shift), vjp)


def take_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather (embedding lookup); ids may have any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids)

    def vjp(g: np.ndarray):
        out = np.zeros_like(table.data)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (out,)

    return Tensor._make(table.data[ids], (table,), vjp)


def take_along(x: Tensor, idx: np.ndarray, axis: int = -1) -> Tensor:
    """Differentiable ``np.take_along_axis``; idx must be unique along ``axis``."""
    x = as_tensor(x)
    idx = np.asarray(idx)

    def vjp(g: np.ndarray):
        out = np.zeros_like(x.data)
        np.put_along_axis(out, idx, g, axis=axis)
        return (out,)

    return Tensor._make(np.take_along_axis(x.data, idx, axis=axis), (x,), vjp)


def custom_op(out_data: np.ndarray, parents: Sequence[Tensor],
              vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]) -> Tensor:
    """Hook for fused kernels with hand-written backward passes."""
    return Tensor._make(out_data, parents, vjp)
