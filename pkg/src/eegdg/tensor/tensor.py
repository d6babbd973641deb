"""Tensor type and the tape that records differentiable operations.

Operations only record themselves while a :class:`Tape` is active (``with
Tape() as tape: ...``).  Outside a tape every op is a plain numpy computation,
which is what evaluation-mode forward passes use.
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

_local = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Node:
    """One recorded primitive application."""

    __slots__ = ("index", "op", "inputs", "backward")

    def __init__(self, index: int, op: str, inputs: tuple["Tensor", ...], backward: Callable):
        self.index = index
        self.op = op
        self.inputs = inputs
        self.backward = backward

    def __repr__(self) -> str:
        ids = [t.node_id for t in self.inputs]
        return f"Node({self.index}, {self.op!r}, inputs={ids})"


class Tensor:
    """N-dimensional array that can take part in reverse-mode differentiation.

    ``requires_grad=True`` marks a leaf (a parameter or an input under test).
    Results of recorded ops carry a ``node`` pointing into the tape.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node: Node | None = None
        self.name = name

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

    @property
    def node_id(self) -> int | None:
        return None if self.node is None else self.node.index

    @property
    def on_tape(self) -> bool:
        return self.requires_grad or self.node is not None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self.shape)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def __len__(self) -> int:
        return self.shape[0]

    # arithmetic sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def sum(self):
        from . import ops
        return ops.sum(self)

    def mean(self):
        from . import ops
        return ops.mean(self)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def _raise_item(shape):
    raise ValueError(f"item() needs a single-element tensor, got shape {shape}")


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


class Tape:
    """Ordered record of primitive applications.

    Nodes are appended as ops execute, so the list is already in topological
    order and a reverse sweep visits each node once.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tape stack corrupted")
        stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: Sequence[Tensor], backward: Callable) -> Node:
        node = Node(len(self.nodes), op, tuple(inputs), backward)
        self.nodes.append(node)
        return node

    def clear(self) -> None:
        self.nodes.clear()

    def backward(self, loss: Tensor, params: Iterable[Tensor] | None = None) -> None:
        """Populate ``.grad`` on every leaf reachable from ``loss``.

        Leaf gradients are overwritten, not accumulated.  Any tensor in
        ``params`` that the loss does not depend on receives a zero gradient.
        """
        if loss.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.node is None or loss.node.index >= len(self.nodes) or self.nodes[loss.node.index] is not loss.node:
            raise ValueError("loss was not produced on this tape")

        pending: dict[int, np.ndarray] = {loss.node.index: np.ones_like(loss.data)}
        leaves: dict[int, tuple[Tensor, np.ndarray]] = {}
        for node in reversed(self.nodes[: loss.node.index + 1]):
            g = pending.pop(node.index, None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.on_tape:
                    continue
                if t.node is not None:
                    prev = pending.get(t.node.index)
                    pending[t.node.index] = gi if prev is None else prev + gi
                else:
                    prev = leaves.get(id(t))
                    leaves[id(t)] = (t, gi if prev is None else prev[1] + gi)

        for t, g in leaves.values():
            t.grad = np.asarray(g, dtype=t.data.dtype).reshape(t.shape)
        if params is not None:
            for p in params:
                if id(p) not in leaves:
                    p.grad = np.zeros_like(p.data)


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> None:
    """Back-propagate ``loss`` through the tape that produced it."""
    if loss.node is None:
        raise ValueError("loss is not on a tape")
    tape = _owner(loss)
    tape.backward(loss, params)


def _owner(t: Tensor) -> Tape:
    for tape in reversed(_tape_stack()):
        n = t.node.index
        if n < len(tape.nodes) and tape.nodes[n] is t.node:
            return tape
    raise ValueError("the tape that produced this loss is no longer active; call tape.backward(loss)")


def record(op: str, out: np.ndarray, inputs: Sequence, backward: Callable) -> Tensor:
    """Wrap ``out`` as a Tensor and, when a tape is active and any input is on
    it, append a node whose ``backward(g)`` returns one gradient per input."""
    result = Tensor(out)
    tape = active_tape()
    if tape is not None and any(isinstance(t, Tensor) and t.on_tape for t in inputs):
        tins = tuple(t if isinstance(t, Tensor) else Tensor(t) for t in inputs)
        result.node = tape.record(op, tins, backward)
    return result
