"""Dense float64 tensor with reverse-mode automatic differentiation.

Every learned quantity in the pipeline lives in a Tensor. The graph is built
eagerly during the forward pass and consumed by a single backward() call;
gradients accumulate additively when a tensor feeds multiple ops.
"""
from __future__ import annotations

import numpy as np


class NumericsError(ValueError):
    """Raised on shape mismatches, non-finite values and contract violations."""


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


def check_finite(arr: np.ndarray, context: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values produced in {context}")


class Tensor:
    """N-dimensional float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        check_finite(self.data, "tensor construction")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None  # callable(grad_out) -> None, set by ops

    # -- construction helpers -------------------------------------------------

    @classmethod
    def zeros(cls, shape, requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros(shape, dtype=np.float64), requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing --------------------------------------------------------

    def _accumulate_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise NumericsError(
                f"gradient shape {grad.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar loss.

        Fills .grad on every requires_grad tensor in the recorded graph.
        """
        if self.data.size != 1:
            raise NumericsError(
                f"backward() requires a scalar loss, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if id(p) not in visited:
                    stack.append((p, False))

        self._accumulate_grad(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in topo:
            if node.grad is not None:
                check_finite(node.grad, "backward pass")

    # -- elementwise ops -------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        if other.data.shape not in (self.data.shape, ()):
            if self.data.shape != ():
                raise NumericsError(
                    f"add: shape mismatch {self.data.shape} vs {other.data.shape}"
                )
        out = Tensor(self.data + other.data)
        out.requires_grad = self.requires_grad or other.requires_grad
        if out.requires_grad:
            out._parents = (self, other)

            def bwd(g):
                if self.requires_grad:
                    self._accumulate_grad(_reduce_to(g, self.data.shape))
                if other.requires_grad:
                    other._accumulate_grad(_reduce_to(g, other.data.shape))

            out._backward = bwd
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = Tensor(-self.data)
        out.requires_grad = self.requires_grad
        if out.requires_grad:
            out._parents = (self,)

            def bwd(g):
                self._accumulate_grad(-g)

            out._backward = bwd
        return out

    def __sub__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other) -> "Tensor":
        return Tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        if other.data.shape not in (self.data.shape, ()) and self.data.shape != ():
            raise NumericsError(
                f"mul: shape mismatch {self.data.shape} vs {other.data.shape}"
            )
        out = Tensor(self.data * other.data)
        out.requires_grad = self.requires_grad or other.requires_grad
        if out.requires_grad:
            out._parents = (self, other)

            def bwd(g):
                if self.requires_grad:
                    self._accumulate_grad(_reduce_to(g * other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate_grad(_reduce_to(g * self.data, other.data.shape))

            out._backward = bwd
        return out

    __rmul__ = __mul__

    def abs(self) -> "Tensor":
        out = Tensor(np.abs(self.data))
        out.requires_grad = self.requires_grad
        if out.requires_grad:
            out._parents = (self,)
            sign = np.sign(self.data)

            def bwd(g):
                self._accumulate_grad(g * sign)

            out._backward = bwd
        return out

    def sum(self) -> "Tensor":
        out = Tensor(np.sum(self.data))
        out.requires_grad = self.requires_grad
        if out.requires_grad:
            out._parents = (self,)

            def bwd(g):
                self._accumulate_grad(np.full_like(self.data, float(g)))

            out._backward = bwd
        return out

    def mean(self) -> "Tensor":
        n = self.data.size
        out = Tensor(np.mean(self.data))
        out.requires_grad = self.requires_grad
        if out.requires_grad:
            out._parents = (self,)

            def bwd(g):
                self._accumulate_grad(np.full_like(self.data, float(g) / n))

            out._backward = bwd
        return out

    def reshape(self, shape) -> "Tensor":
        out = Tensor(self.data.reshape(shape))
        out.requires_grad = self.requires_grad
        if out.requires_grad:
            out._parents = (self,)
            orig = self.data.shape

            def bwd(g):
                self._accumulate_grad(g.reshape(orig))

            out._backward = bwd
        return out

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to a target shape (handles the scalar case)."""
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(np.sum(grad))
    raise NumericsError(f"cannot reduce gradient {grad.shape} to {shape}")


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    out.requires_grad = x.requires_grad
    if out.requires_grad:
        out._parents = (x,)
        gate = (x.data > 0.0).astype(np.float64)

        def bwd(g):
            x._accumulate_grad(g * gate)

        out._backward = bwd
    return out


def sigmoid(x: Tensor) -> Tensor:
    # two-branch form keeps exp() arguments non-positive
    pos = x.data >= 0
    z = np.empty_like(x.data)
    z[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ez = np.exp(x.data[~pos])
    z[~pos] = ez / (1.0 + ez)
    out = Tensor(z)
    out.requires_grad = x.requires_grad
    if out.requires_grad:
        out._parents = (x,)

        def bwd(g):
            x._accumulate_grad(g * z * (1.0 - z))

        out._backward = bwd
    return out
