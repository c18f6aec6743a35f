"""Minimal reverse-mode autodiff over dense float64 arrays.

A small tape covering exactly the primitives the contrastive encoder and
dual-temperature loss need: matmul, add, elementwise nonlinearities,
row-wise L2 normalization, dot product, exp, log, sum, plus a
stop-gradient node. Gradients accumulate on requires_grad leaves only.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class NumericsError(ArithmeticError):
    """Raised when a primitive produces a non-finite value."""


class Tensor:
    """Node in the computation graph. Data is read-only after construction."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericsError("tensor constructed with non-finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # Operator sugar used throughout the loss construction.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to the shape of a broadcast operand."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _make(op: str, data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericsError(f"non-finite value produced by primitive '{op}'")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._parents = parents
    out._backward = backward
    out._op = op
    return out


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make("add", out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make("sub", out_data, (a, b), backward)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _make("mul", out_data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.data.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return _make("div", out_data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _make("matmul", out_data, (a, b), backward)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    t = np.tanh(a.data)
    return _make("tanh", t, (a,), lambda g: (g * (1.0 - t * t),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return _make("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    e = np.exp(a.data)
    return _make("exp", e, (a,), lambda g: (g * e,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    return _make("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def tsum(a) -> Tensor:
    """Sum of all elements, returning a scalar tensor."""
    a = _as_tensor(a)
    out_data = np.asarray(a.data.sum())
    return _make("sum", out_data, (a,), lambda g: (np.broadcast_to(g, a.data.shape).copy(),))


def rowsum(a) -> Tensor:
    """Sum along axis 1 of a 2-D tensor, returning a vector."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("rowsum expects a 2-D tensor")
    out_data = a.data.sum(axis=1)

    def backward(g):
        return (np.repeat(g[:, None], a.data.shape[1], axis=1),)

    return _make("rowsum", out_data, (a,), backward)


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("transpose expects a 2-D tensor")
    return _make("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def dot(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ValueError("dot expects 1-D operands")
    out_data = np.asarray(a.data @ b.data)

    def backward(g):
        return g * b.data, g * a.data

    return _make("dot", out_data, (a, b), backward)


def row(a, i: int) -> Tensor:
    """Extract row i of a 2-D tensor as a 1-D vector."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("row expects a 2-D tensor")
    out_data = a.data[i].copy()

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[i] = g
        return (ga,)

    return _make("row", out_data, (a,), backward)


def l2_normalize(a, eps_error: float = 1e-12) -> Tensor:
    """Normalize a 1-D vector, or each row of a 2-D tensor, to unit L2 norm.

    A (near-)zero input norm raises NumericsError: a zero embedding means
    something upstream already went wrong, so there is no subgradient choice.
    """
    a = _as_tensor(a)
    if a.data.ndim == 1:
        norm = np.linalg.norm(a.data)
        if norm <= eps_error:
            raise NumericsError("l2_normalize: zero-norm input vector")
        y = a.data / norm

        def backward(g):
            return ((g - y * (y @ g)) / norm,)

        return _make("l2_normalize", y, (a,), backward)
    if a.data.ndim == 2:
        norms = np.linalg.norm(a.data, axis=1, keepdims=True)
        if np.any(norms <= eps_error):
            raise NumericsError("l2_normalize: zero-norm input row")
        y = a.data / norms

        def backward(g):
            inner = np.sum(y * g, axis=1, keepdims=True)
            return ((g - y * inner) / norms,)

        return _make("l2_normalize", y, (a,), backward)
    raise ValueError("l2_normalize expects a 1-D or 2-D tensor")


def stop_gradient(a) -> Tensor:
    """Value passes through; the backward pass contributes nothing upstream."""
    a = _as_tensor(a)
    out = _make("stop_gradient", a.data.copy(), (), None)
    out.requires_grad = False
    return out


def backward(root: Tensor) -> None:
    """Reverse-mode pass from a scalar root.

    Populates .grad on every requires_grad leaf reachable from root;
    intermediate node grads are discarded afterwards.
    """
    if root.data.size != 1:
        raise ValueError("backward requires a scalar root")

    # Iterative topological order over the subgraph that needs gradients.
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is None or node.grad is None:
            continue
        contributions = node._backward(node.grad)
        for parent, contrib in zip(node._parents, contributions):
            if not parent.requires_grad or contrib is None:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad = parent.grad + contrib

    for node in topo:
        if not node.is_leaf:
            node.grad = None


def forward_backward(root: Tensor, params: Sequence[Tensor]) -> tuple[float, list[np.ndarray]]:
    """Backprop from a scalar root; returns (loss value, grads aligned with params).

    Parameters that the root does not depend on get zero gradients.
    """
    for p in params:
        p.grad = None
    backward(root)
    grads = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    return float(root.data), grads


def finite_difference_grad(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function, one coordinate at a time."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64)  # own copy: coordinates are perturbed in place
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = f(x)
        flat[i] = orig - eps
        f_minus = f(x)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad
