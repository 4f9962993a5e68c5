"""Minimal reverse-mode automatic differentiation over numpy float64 arrays.

A Tensor wraps an ndarray and remembers how it was produced; calling
``backward()`` on a scalar result walks the graph in reverse topological order
and accumulates gradients into every tensor created with
``requires_grad=True``.  Broadcasting follows numpy semantics; gradients of
broadcast operands are summed back to the original shape.

Only the operations needed by the pose refiner and its loss are implemented.
Everything is float64: gradient checks against central finite differences are
expected to agree to ~1e-8 for linear ops and ~1e-4 through the full model.
"""

from __future__ import annotations

import numpy as np

_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over dimensions that were broadcast in the forward op."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, parents=(),
                 backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.grad is not None})"

    # -- graph plumbing ------------------------------------------------

    def _track(self) -> bool:
        return _grad_enabled and (self.requires_grad or self._parents)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    # -- elementwise arithmetic ----------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out_data = self.data + other.data
        if not (_grad_enabled and (self._track() or other._track())):
            return Tensor(out_data)

        def backward_fn(g):
            if self._track():
                self._accumulate(_unbroadcast(g, self.shape))
            if other._track():
                other._accumulate(_unbroadcast(g, other.shape))

        return Tensor(out_data, parents=(self, other), backward_fn=backward_fn)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out_data = self.data * other.data
        if not (_grad_enabled and (self._track() or other._track())):
            return Tensor(out_data)

        def backward_fn(g):
            if self._track():
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other._track():
                other._accumulate(_unbroadcast(g * self.data, other.shape))

        return Tensor(out_data, parents=(self, other), backward_fn=backward_fn)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out_data = self.data / other.data
        if not (_grad_enabled and (self._track() or other._track())):
            return Tensor(out_data)

        def backward_fn(g):
            if self._track():
                self._accumulate(_unbroadcast(g / other.data, self.shape))
            if other._track():
                other._accumulate(_unbroadcast(
                    -g * self.data / (other.data * other.data), other.shape))

        return Tensor(out_data, parents=(self, other), backward_fn=backward_fn)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        out_data = self.data @ other.data
        if not (_grad_enabled and (self._track() or other._track())):
            return Tensor(out_data)

        def backward_fn(g):
            if self._track():
                ga = g @ np.swapaxes(other.data, -1, -2)
                self._accumulate(_unbroadcast(ga, self.shape))
            if other._track():
                gb = np.swapaxes(self.data, -1, -2) @ g
                other._accumulate(_unbroadcast(gb, other.shape))

        return Tensor(out_data, parents=(self, other), backward_fn=backward_fn)

    # -- nonlinearities -------------------------------------------------

    def relu(self):
        out_data = np.maximum(self.data, 0.0)
        if not self._track():
            return Tensor(out_data)
        mask = self.data > 0.0

        def backward_fn(g):
            self._accumulate(g * mask)

        return Tensor(out_data, parents=(self,), backward_fn=backward_fn)

    def exp(self):
        out_data = np.exp(self.data)
        if not self._track():
            return Tensor(out_data)

        def backward_fn(g):
            self._accumulate(g * out_data)

        return Tensor(out_data, parents=(self,), backward_fn=backward_fn)

    def sqrt(self):
        out_data = np.sqrt(self.data)
        if not self._track():
            return Tensor(out_data)

        def backward_fn(g):
            self._accumulate(g * 0.5 / out_data)

        return Tensor(out_data, parents=(self,), backward_fn=backward_fn)

    def arccos(self):
        out_data = np.arccos(self.data)
        if not self._track():
            return Tensor(out_data)

        def backward_fn(g):
            self._accumulate(-g / np.sqrt(1.0 - self.data * self.data))

        return Tensor(out_data, parents=(self,), backward_fn=backward_fn)

    def abs(self):
        out_data = np.abs(self.data)
        if not self._track():
            return Tensor(out_data)
        sign = np.sign(self.data)

        def backward_fn(g):
            self._accumulate(g * sign)

        return Tensor(out_data, parents=(self,), backward_fn=backward_fn)

    def clip(self, lo: float, hi: float):
        out_data = np.clip(self.data, lo, hi)
        if not self._track():
            return Tensor(out_data)
        mask = (self.data > lo) & (self.data < hi)

        def backward_fn(g):
            self._accumulate(g * mask)

        return Tensor(out_data, parents=(self,), backward_fn=backward_fn)

    # -- reductions -----------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        if not self._track():
            return Tensor(out_data)

        def backward_fn(g):
            expanded = g
            if axis is not None and not keepdims:
                expanded = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(expanded, self.shape).copy())

        return Tensor(out_data, parents=(self,), backward_fn=backward_fn)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def amin(self, axis: int):
        """Minimum along one axis; gradient flows to the first argmin."""
        idx = np.argmin(self.data, axis=axis)
        out_data = np.take_along_axis(self.data, np.expand_dims(idx, axis),
                                      axis=axis).squeeze(axis)
        if not self._track():
            return Tensor(out_data)

        def backward_fn(g):
            full = np.zeros_like(self.data)
            np.put_along_axis(full, np.expand_dims(idx, axis),
                              np.expand_dims(g, axis), axis=axis)
            self._accumulate(full)

        return Tensor(out_data, parents=(self,), backward_fn=backward_fn)

    def softmax(self, axis: int = -1):
        """Numerically stable softmax; the max shift carries no gradient."""
        shifted = self - Tensor(self.data.max(axis=axis, keepdims=True))
        e = shifted.exp()
        return e / e.sum(axis=axis, keepdims=True)

    # -- shape manipulation ----------------------------------------------

    def reshape(self, *shape):
        out_data = self.data.reshape(*shape)
        if not self._track():
            return Tensor(out_data)
        original = self.shape

        def backward_fn(g):
            self._accumulate(g.reshape(original))

        return Tensor(out_data, parents=(self,), backward_fn=backward_fn)

    def swapaxes(self, a: int, b: int):
        out_data = np.swapaxes(self.data, a, b)
        if not self._track():
            return Tensor(out_data)

        def backward_fn(g):
            self._accumulate(np.swapaxes(g, a, b))

        return Tensor(out_data, parents=(self,), backward_fn=backward_fn)

    def __getitem__(self, key):
        out_data = self.data[key]
        if not self._track():
            return Tensor(out_data)

        def backward_fn(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            self._accumulate(full)

        return Tensor(out_data, parents=(self,), backward_fn=backward_fn)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    if not (_grad_enabled and any(t._track() for t in tensors)):
        return Tensor(out_data)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        pieces = np.split(g, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t._track():
                t._accumulate(piece)

    return Tensor(out_data, parents=tuple(tensors), backward_fn=backward_fn)


def parameter(data, rng: np.random.Generator | None = None,
              scale: float | None = None) -> Tensor:
    """Trainable tensor; optionally initialized U(-scale, scale)."""
    if rng is not None:
        data = rng.uniform(-scale, scale, size=data)
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)
