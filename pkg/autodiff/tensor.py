# autodiff/tensor.py
"""Dense float64 tensors recorded on a define-by-run tape.

A Tensor without a tape handle is a constant: immutable and safe to share
across threads. Leaves and op results created on a Tape carry a `grad_id`
into that tape; `backward` walks the tape once in reverse creation order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from domain.errors import ArgumentError, NumericError

logger = logging.getLogger(__name__)

VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def _frozen(values, op: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{op}: non-finite values")
    arr.setflags(write=False)
    return arr


class Tensor:
    """n-dimensional float64 array, optionally attached to a Tape."""

    __slots__ = ("values", "tape", "grad_id")

    def __init__(self, values, tape: "Tape | None" = None, grad_id: int | None = None) -> None:
        self.values = _frozen(values, "tensor")
        self.tape = tape
        self.grad_id = grad_id

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def is_constant(self) -> bool:
        return self.tape is None

    @property
    def T(self) -> "Tensor":
        from autodiff import ops

        return ops.transpose(self)

    def item(self) -> float:
        if self.values.size != 1:
            raise ArgumentError(f"item() needs a single value, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values

    def reshape(self, *shape) -> "Tensor":
        from autodiff import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        from autodiff import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        from autodiff import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)

    def __getitem__(self, index) -> "Tensor":
        from autodiff import ops

        return ops.take(self, index)

    def __add__(self, other) -> "Tensor":
        from autodiff import ops

        return ops.add(self, other)

    def __radd__(self, other) -> "Tensor":
        from autodiff import ops

        return ops.add(other, self)

    def __sub__(self, other) -> "Tensor":
        from autodiff import ops

        return ops.sub(self, other)

    def __rsub__(self, other) -> "Tensor":
        from autodiff import ops

        return ops.sub(other, self)

    def __mul__(self, other) -> "Tensor":
        from autodiff import ops

        return ops.mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        from autodiff import ops

        return ops.mul(other, self)

    def __truediv__(self, other) -> "Tensor":
        from autodiff import ops

        return ops.div(self, other)

    def __rtruediv__(self, other) -> "Tensor":
        from autodiff import ops

        return ops.div(other, self)

    def __neg__(self) -> "Tensor":
        from autodiff import ops

        return ops.neg(self)

    def __matmul__(self, other) -> "Tensor":
        from autodiff import ops

        return ops.matmul(self, other)

    def __repr__(self) -> str:
        where = "const" if self.tape is None else f"tape#{self.grad_id}"
        return f"Tensor(shape={self.shape}, {where})"


@dataclass(frozen=True)
class _Node:
    parents: Tuple[Optional[int], ...]
    vjp: Optional[VJP]
    shape: Tuple[int, ...]

    @property
    def is_leaf(self) -> bool:
        return self.vjp is None


class Tape:
    """Ordered record of primitive ops. Parents always precede children."""

    def __init__(self) -> None:
        self._nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def leaf(self, values) -> Tensor:
        arr = _frozen(values, "leaf")
        tensor = Tensor.__new__(Tensor)
        tensor.values = arr
        tensor.tape = self
        tensor.grad_id = len(self._nodes)
        self._nodes.append(_Node(parents=(), vjp=None, shape=arr.shape))
        return tensor

    def record(self, values: np.ndarray, parents: Tuple[Optional[int], ...], vjp: VJP) -> Tensor:
        tensor = Tensor.__new__(Tensor)
        tensor.values = values
        tensor.tape = self
        tensor.grad_id = len(self._nodes)
        self._nodes.append(_Node(parents=parents, vjp=vjp, shape=values.shape))
        return tensor

    def node(self, grad_id: int) -> _Node:
        return self._nodes[grad_id]

    @property
    def leaf_ids(self) -> list[int]:
        return [i for i, n in enumerate(self._nodes) if n.is_leaf]


def backward(tape: Tape, root: Tensor) -> Dict[int, np.ndarray]:
    """Reverse-mode sweep from a scalar root.

    Returns a gradient for every leaf on the tape, keyed by grad_id. Leaves the
    root does not depend on get zeros.
    """
    if root.tape is not tape or root.grad_id is None:
        raise ArgumentError("backward: root is not recorded on this tape")
    if root.values.size != 1:
        raise ArgumentError(f"backward: root must be scalar, got shape {root.shape}")

    adjoints: list[Optional[np.ndarray]] = [None] * len(tape)
    adjoints[root.grad_id] = np.ones_like(root.values)
    for idx in range(root.grad_id, -1, -1):
        grad = adjoints[idx]
        node = tape.node(idx)
        if grad is None or node.vjp is None:
            continue
        parent_grads = node.vjp(grad)
        for pid, pgrad in zip(node.parents, parent_grads):
            if pid is None or pgrad is None:
                continue
            if pgrad.shape != tape.node(pid).shape:
                pgrad = np.reshape(pgrad, tape.node(pid).shape)
            adjoints[pid] = pgrad if adjoints[pid] is None else adjoints[pid] + pgrad

    grads: Dict[int, np.ndarray] = {}
    for leaf_id in tape.leaf_ids:
        g = adjoints[leaf_id]
        grads[leaf_id] = np.zeros(tape.node(leaf_id).shape) if g is None else g
    logger.debug("backward: %d nodes, %d leaves", len(tape), len(grads))
    return grads


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)
