"""Reverse-mode differentiation over a recorded tape of dense float64 ops.

A :class:`Tape` stores node values in creation order; since every op's inputs
exist before the op records its output, creation order is a topological order
and :meth:`Tape.backward` is a single reverse sweep.

    >>> tape = Tape()
    >>> w = tape.leaf([[3.0]])
    >>> x = tape.constant([[2.0]])
    >>> loss = tape.linear(x, w, tape.constant([0.0]))
    >>> tape.backward(loss)[w.idx]
    array([[2.]])
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels
from .errors import ContractError, DimensionError, InputError, NumericalError


def as_tensor(data, ndim: int | None = None) -> np.ndarray:
    """Copy ``data`` into an immutable float64 array."""
    arr = np.array(data, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d tensor, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def check_finite(arr: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{what} contains NaN or Inf")
    return arr


class Node:
    """Handle to one value on a tape."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.idx]

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self):
        return f"Node({self.idx}, shape={self.shape})"


class Tape:
    """Single-threaded recorder; create one per client computation."""

    def __init__(self):
        self.values: list[np.ndarray] = []
        self.ops: list[tuple] = []  # (kind, input ids, output id, ctx)
        self._k = kernels.active

    # -- node creation ---------------------------------------------------

    def _push(self, value: np.ndarray) -> Node:
        value.setflags(write=False)
        self.values.append(value)
        return Node(self, len(self.values) - 1)

    def leaf(self, value) -> Node:
        """Record an input value (parameter, received representation...)."""
        return self._push(np.array(value, dtype=np.float64))

    constant = leaf

    def _own(self, *nodes: Node):
        for n in nodes:
            if n.tape is not self:
                raise ContractError("node belongs to a different tape")

    def _record(self, kind, inputs, value, ctx=None) -> Node:
        out = self._push(value)
        self.ops.append((kind, tuple(n.idx for n in inputs), out.idx, ctx))
        return out

    # -- primitives ------------------------------------------------------

    def linear(self, x: Node, W: Node, b: Node) -> Node:
        self._own(x, W, b)
        xs, ws, bs = x.shape, W.shape, b.shape
        if len(xs) != 2 or len(ws) != 2 or len(bs) != 1 or xs[1] != ws[0] or ws[1] != bs[0]:
            raise DimensionError(f"linear: x{xs} @ W{ws} + b{bs} do not conform")
        k = self._k
        out = k.add_bias(k.matmul(x.value, W.value), b.value)
        return self._record("linear", (x, W, b), out)

    def relu(self, x: Node) -> Node:
        self._own(x)
        return self._record("relu", (x,), self._k.relu(x.value))

    def mean(self, nodes: Sequence[Node]) -> Node:
        if not nodes:
            raise ContractError("mean of an empty list of tensors")
        self._own(*nodes)
        shape = nodes[0].shape
        for n in nodes:
            if n.shape != shape:
                raise DimensionError(f"mean: shapes {shape} and {n.shape} differ")
        acc = np.zeros(shape)
        for n in nodes:
            acc = acc + n.value
        return self._record("mean", nodes, acc / len(nodes))

    def scale(self, x: Node, c: float) -> Node:
        self._own(x)
        return self._record("scale", (x,), x.value * c, float(c))

    def add(self, nodes: Sequence[Node]) -> Node:
        """Sum of same-shape nodes, left to right."""
        if not nodes:
            raise ContractError("add of an empty list of tensors")
        self._own(*nodes)
        acc = np.zeros(nodes[0].shape)
        for n in nodes:
            if n.shape != acc.shape:
                raise DimensionError(f"add: shapes {acc.shape} and {n.shape} differ")
            acc = acc + n.value
        return self._record("add", nodes, acc)

    def weighted_sum(self, nodes: Sequence[Node], weights: Sequence[float]) -> Node:
        """``sum_i w_i * x_i`` accumulated in list order from 0.0."""
        if len(nodes) != len(weights) or not nodes:
            raise ContractError("weighted_sum needs matching nonempty nodes and weights")
        self._own(*nodes)
        acc = np.zeros(nodes[0].shape)
        for n, w in zip(nodes, weights):
            acc = acc + w * n.value
        return self._record("wsum", nodes, acc, tuple(float(w) for w in weights))

    def softmax_xent(self, logits: Node, labels) -> Node:
        self._own(logits)
        y = np.asarray(labels, dtype=np.int64)
        if logits.value.ndim != 2:
            raise DimensionError(f"logits must be B x C, got {logits.shape}")
        n, c = logits.shape
        if n < 1 or y.shape != (n,):
            raise InputError(f"need one label per row: {n} rows, labels shape {y.shape}")
        if y.min() < 0 or y.max() >= c:
            raise InputError(f"labels must lie in [0, {c})")
        loss, grad = self._k.softmax_xent(logits.value, y)
        return self._record("xent", (logits,), np.array(loss), grad)

    def sq_error(self, pred: Node, target) -> Node:
        """``(1 / 2B) * sum (pred - target)^2``."""
        self._own(pred)
        t = np.asarray(target, dtype=np.float64)
        if t.shape != pred.shape or pred.value.ndim != 2:
            raise DimensionError(f"sq_error: {pred.shape} vs {t.shape}")
        loss, grad = self._k.sq_error(pred.value, t)
        return self._record("sqerr", (pred,), np.array(loss), grad)

    # -- reverse sweep ---------------------------------------------------

    def backward(self, out: Node, seed=None) -> dict[int, np.ndarray]:
        """Adjoints of every node reachable backwards from ``out``.

        With ``seed=None`` the output must be scalar and is seeded with 1.
        Passing ``seed`` propagates an upstream vector-Jacobian product, which
        is how a representation producer consumes returned gradients.
        """
        self._own(out)
        if seed is None:
            if out.value.size != 1:
                raise ContractError(f"backward needs a scalar loss, got shape {out.shape}")
            seed = np.ones_like(out.value)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != out.shape:
                raise DimensionError(f"seed shape {seed.shape} != node shape {out.shape}")
        adj: dict[int, np.ndarray] = {out.idx: seed}
        k = self._k
        vals = self.values
        for kind, ins, o, ctx in reversed(self.ops):
            if o > out.idx or o not in adj:
                continue
            g = adj[o]
            if kind == "linear":
                x, W, b = ins
                grads = (k.matmul_nt(g, vals[W]), k.matmul_tn(vals[x], g), k.colsum(g))
            elif kind == "relu":
                grads = (k.relu_backward(vals[ins[0]], g),)
            elif kind == "mean":
                share = g / len(ins)
                grads = (share,) * len(ins)
            elif kind == "add":
                grads = (g,) * len(ins)
            elif kind == "scale":
                grads = (g * ctx,)
            elif kind == "wsum":
                grads = tuple(g * w for w in ctx)
            elif kind in ("xent", "sqerr"):
                grads = (ctx * float(g),)
            else:  # pragma: no cover
                raise ContractError(f"unknown op {kind}")
            for i, gi in zip(ins, grads):
                prev = adj.get(i)
                adj[i] = gi if prev is None else prev + gi
        return adj


# Module-level spellings of the primitives.


def linear_forward(x: Node, W: Node, b: Node) -> Node:
    return x.tape.linear(x, W, b)


def relu_forward(x: Node) -> Node:
    return x.tape.relu(x)


def softmax_cross_entropy(logits: Node, labels) -> Node:
    return logits.tape.softmax_xent(logits, labels)


def backward(tape: Tape, loss: Node, wrt: Sequence[Node] = ()) -> list[np.ndarray]:
    """Gradients of scalar ``loss`` with respect to ``wrt`` (zeros if unreachable)."""
    adj = tape.backward(loss)
    return [adj.get(n.idx, np.zeros(n.shape)) for n in wrt]
