"""Graph node type for reverse-mode differentiation."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

DTYPE = np.float32

# When set, every op output is checked for NaN/Inf as it is produced.
_DEBUG = {"check_finite": False}


def set_debug(check_finite: bool) -> None:
    _DEBUG["check_finite"] = bool(check_finite)


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN or Inf while finite checks are enabled."""


class Tensor:
    """A float32 array that optionally records how it was computed.

    ``grad`` is allocated lazily on the first backward pass that reaches the
    tensor and accumulates across passes until :meth:`zero_grad`.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: Sequence["Tensor"] = (),
        _backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
        op: str = "",
    ):
        arr = np.asarray(data, dtype=DTYPE)
        if _DEBUG["check_finite"] and not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values produced by op '{op or 'leaf'}'")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward = _backward
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Arithmetic sugar; the heavy lifting lives in functional.
    def __add__(self, other):
        from . import functional as F

        return F.add(self, _as_tensor(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F

        return F.add(self, F.scale(_as_tensor(other, self), -1.0))

    def __rsub__(self, other):
        from . import functional as F

        return F.add(_as_tensor(other, self), F.scale(self, -1.0))

    def __neg__(self):
        from . import functional as F

        return F.scale(self, -1.0)

    def __mul__(self, other):
        from . import functional as F

        if np.isscalar(other):
            return F.scale(self, float(other))
        return F.mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        from . import functional as F

        return F.matmul(self, other)

    def sum(self):
        from . import functional as F

        return F.sum(self)

    def mean(self):
        from . import functional as F

        return F.mean(self)

    def reshape(self, *shape):
        from . import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes):
        from . import functional as F

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes)

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        backward(self, grad)


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full(like.shape, x, dtype=DTYPE))


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    """Wrap an op result, wiring it into the graph only if an input needs grad."""
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward_fn, op=op)


def _toposort(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, grad: Optional[np.ndarray] = None) -> None:
    """Populate ``.grad`` on every tensor reachable from ``loss``.

    Only scalar losses are accepted unless an explicit seed gradient is given.
    Leaf gradients accumulate; intermediate gradients are released afterwards.
    """
    if grad is None:
        if loss.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    elif np.shape(grad) != loss.shape:
        raise ValueError(f"seed gradient shape {np.shape(grad)} != loss shape {loss.shape}")
    if not loss.requires_grad:
        return

    order = _toposort(loss)
    pending = {id(loss): np.asarray(grad, dtype=DTYPE)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + pg
            else:
                pending[key] = pg
