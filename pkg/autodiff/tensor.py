"""
Define-by-run reverse-mode tensors.

Each non-leaf Tensor stores its parents and a backward function mapping the
output gradient to one gradient per parent. ``backward()`` walks the graph in
reverse topological order and accumulates into ``.grad``.
"""

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording in the current thread."""
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor:
    """A numpy array with an optional gradient slot and graph links."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str = "") -> None:
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None

    # ── properties ────────────────────────────────────────────────────────

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    # ── autograd ──────────────────────────────────────────────────────────

    def _accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + grad

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, grad: Optional[ArrayLike] = None) -> None:
        """
        Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``.

        Args:
            grad: Upstream gradient; defaults to ones (a scalar loss).
        """
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        seed = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=self.data.dtype)
        self._accumulate(seed)

        for node in reversed(self._topological_order()):
            if node._backward is None or node.grad is None:
                continue
            parent_grads = node._backward(node.grad)
            for parent, g in zip(node._parents, parent_grads):
                if g is not None and parent.requires_grad:
                    parent._accumulate(np.asarray(g, dtype=parent.data.dtype))

    # ── operator sugar (implemented in autodiff.ops) ──────────────────────

    def __add__(self, other: "TensorLike") -> "Tensor":
        from autodiff import ops
        return ops.add(self, other)

    def __radd__(self, other: "TensorLike") -> "Tensor":
        from autodiff import ops
        return ops.add(other, self)

    def __sub__(self, other: "TensorLike") -> "Tensor":
        from autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other: "TensorLike") -> "Tensor":
        from autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other: "TensorLike") -> "Tensor":
        from autodiff import ops
        return ops.mul(self, other)

    def __rmul__(self, other: "TensorLike") -> "Tensor":
        from autodiff import ops
        return ops.mul(other, self)

    def __neg__(self) -> "Tensor":
        from autodiff import ops
        return ops.neg(self)

    def __truediv__(self, other: float) -> "Tensor":
        from autodiff import ops
        return ops.mul(self, 1.0 / other)

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        from autodiff import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        from autodiff import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        from autodiff import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        from autodiff import ops
        return ops.transpose(self, axes or None)


TensorLike = Union[Tensor, ArrayLike]


def as_tensor(value: TensorLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """Wrap an op result, recording the graph only when a parent needs it."""
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out
