"""Minimal reverse-mode automatic differentiation over numpy arrays.

Define-by-run tape with exactly the operations the denoiser, the losses and
the kinematic chain need.  Everything is float64.  Gradients are exact
reverse-mode derivatives; the test suite validates them against central
finite differences.

Only basic indexing (ints and slices) is supported by ``__getitem__``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray

_DEFAULT_DTYPE = np.float64


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def dtype_context(dtype):
    """Temporarily switch the working dtype (float32 performance mode)."""
    global _DEFAULT_DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError("dtype must be float32 or float64")
    prev = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = dtype
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Reduce ``grad`` back to ``shape`` by summing broadcast axes."""
    if grad.shape == shape:
        return grad
    # sum away extra leading axes
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # sum axes that were stretched from size 1
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "_grad_owned")

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[Array], None] | None = None,
    ):
        self.value = np.asarray(value, dtype=_DEFAULT_DTYPE)
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self._grad_owned = False

    # ------------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def _accumulate(self, g: Array) -> None:
        # First contribution borrows the incoming buffer; later ones copy
        # on write, so shared arrays from backward closures stay intact.
        if self.grad is None:
            self.grad = g
            self._grad_owned = False
        elif self._grad_owned:
            self.grad += g
        else:
            self.grad = self.grad + g
            self._grad_owned = True

    def backward(self, seed: Array | None = None) -> None:
        """Backpropagate from this tensor through the recorded tape."""
        if seed is None:
            if self.value.size != 1:
                raise ValueError("backward() without seed requires a scalar output")
            seed = np.ones_like(self.value)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self._accumulate(np.asarray(seed, dtype=self.value.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------------
    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def __repr__(self):  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_DEFAULT_DTYPE))


def parameter(value) -> Tensor:
    return Tensor(np.array(value, dtype=_DEFAULT_DTYPE), requires_grad=True)


def _node(value: Array, parents: Sequence[Tensor], backward) -> Tensor:
    req = any(p.requires_grad for p in parents)
    if not req:
        return Tensor(value)
    return Tensor(value, requires_grad=True, parents=tuple(parents), backward=backward)


# ----------------------------------------------------------------------
# arithmetic
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value + b.value

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value - b.value

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _node(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value * b.value

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.value, b.shape))

    return _node(out, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value / b.value

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.value / (b.value * b.value), b.shape))

    return _node(out, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    e = float(exponent)
    if e == 2.0:  # integer powers avoid the slow generic pow kernel
        out = a.value * a.value

        def backward2(g: Array) -> None:
            a._accumulate(g * (2.0 * a.value))

        return _node(out, (a,), backward2)
    out = a.value**e

    def backward(g: Array) -> None:
        a._accumulate(g * e * a.value ** (e - 1.0))

    return _node(out, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires operands with ndim >= 2")
    out = a.value @ b.value

    def backward(g: Array) -> None:
        if a.requires_grad:
            ga = g @ np.swapaxes(b.value, -1, -2)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.value, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))

    return _node(out, (a, b), backward)


# ----------------------------------------------------------------------
# elementwise transcendentals
def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)

    def backward(g: Array) -> None:
        a._accumulate(g * out)

    return _node(out, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.value)

    def backward(g: Array) -> None:
        a._accumulate(g / a.value)

    return _node(out, (a,), backward)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.value)

    def backward(g: Array) -> None:
        a._accumulate(g * 0.5 / out)

    return _node(out, (a,), backward)


def sin(a) -> Tensor:
    a = as_tensor(a)
    out = np.sin(a.value)

    def backward(g: Array) -> None:
        a._accumulate(g * np.cos(a.value))

    return _node(out, (a,), backward)


def cos(a) -> Tensor:
    a = as_tensor(a)
    out = np.cos(a.value)

    def backward(g: Array) -> None:
        a._accumulate(-g * np.sin(a.value))

    return _node(out, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)

    def backward(g: Array) -> None:
        a._accumulate(g * (1.0 - out * out))

    return _node(out, (a,), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = (a.value > 0.0).astype(a.value.dtype)
    out = a.value * mask

    def backward(g: Array) -> None:
        a._accumulate(g * mask)

    return _node(out, (a,), backward)


def gelu(a) -> Tensor:
    """Gaussian error linear unit, tanh approximation (smooth everywhere)."""
    a = as_tensor(a)
    c = 0.7978845608028654  # sqrt(2 / pi)
    k = 0.044715
    x = a.value
    x2 = x * x
    t = np.tanh(c * (x + k * x2 * x))
    out = 0.5 * x * (1.0 + t)

    def backward(g: Array) -> None:
        # d/dx [0.5 x (1+t)] = 0.5 (1+t) + 0.5 x (1-t^2) c (1 + 3 k x^2)
        sech2 = 1.0 - t * t
        a._accumulate(g * (0.5 * (1.0 + t) + 0.5 * x * sech2 * c * (1.0 + 3.0 * k * x2)))

    return _node(out, (a,), backward)


# ----------------------------------------------------------------------
# reductions and shape ops
def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def backward(g: Array) -> None:
        gg = np.asarray(g)
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        a._accumulate(np.broadcast_to(gg, a.shape).copy())

    return _node(out, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.value.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.shape[ax]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def cumsum(a, axis: int) -> Tensor:
    a = as_tensor(a)
    out = np.cumsum(a.value, axis=axis)

    def backward(g: Array) -> None:
        rev = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
        a._accumulate(rev)

    return _node(out, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.value.reshape(shape)

    def backward(g: Array) -> None:
        a._accumulate(g.reshape(a.shape))

    return _node(out, (a,), backward)


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    out = a.value.transpose(axes)
    inverse = tuple(int(i) for i in np.argsort(axes))

    def backward(g: Array) -> None:
        a._accumulate(g.transpose(inverse))

    return _node(out, (a,), backward)


def getitem(a, key) -> Tensor:
    a = as_tensor(a)
    out = a.value[key]

    def backward(g: Array) -> None:
        full = np.zeros_like(a.value)
        full[key] += g
        a._accumulate(full)

    return _node(out, (a,), backward)


def concatenate(parts: Sequence, axis: int) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.value for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g: Array) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(int(lo), int(hi))
                p._accumulate(g[tuple(sl)])

    return _node(out, tuple(parts), backward)


def stack(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    expanded = []
    for p in parts:
        shape = list(p.shape)
        shape.insert(axis if axis >= 0 else p.ndim + 1 + axis, 1)
        expanded.append(reshape(p, tuple(shape)))
    return concatenate(expanded, axis=axis)


# ----------------------------------------------------------------------
# composites used by the model
def softmax(a, axis: int) -> Tensor:
    """Numerically stable softmax; the stabilising shift is a constant."""
    a = as_tensor(a)
    e = np.exp(a.value - a.value.max(axis=axis, keepdims=True))
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g: Array) -> None:
        a._accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return _node(s, (a,), backward)


def l2norm(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along ``axis`` with subgradient 0 at the origin."""
    a = as_tensor(a)
    out = np.sqrt((a.value * a.value).sum(axis=axis, keepdims=keepdims))

    def backward(g: Array) -> None:
        n = out if keepdims else np.expand_dims(out, axis)
        gg = g if keepdims else np.expand_dims(g, axis)
        safe = np.where(n > 0.0, n, 1.0)
        direction = np.where(n > 0.0, a.value / safe, 0.0)
        a._accumulate(gg * direction)

    return _node(out, (a,), backward)


def layer_norm(a, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then affine."""
    a = as_tensor(a)
    gamma = as_tensor(gamma)
    beta = as_tensor(beta)
    mu = a.value.mean(axis=-1, keepdims=True)
    centered = a.value - mu
    inv = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv
    out = normed * gamma.value + beta.value

    def backward(g: Array) -> None:
        if beta.requires_grad:
            beta._accumulate(_unbroadcast(g, beta.shape))
        if gamma.requires_grad:
            gamma._accumulate(_unbroadcast(g * normed, gamma.shape))
        if a.requires_grad:
            dn = g * gamma.value
            m1 = dn.mean(axis=-1, keepdims=True)
            m2 = (dn * normed).mean(axis=-1, keepdims=True)
            a._accumulate(inv * (dn - m1 - normed * m2))

    return _node(out, (a, gamma, beta), backward)
