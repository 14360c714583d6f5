"""Split-network predictor families.

Client ids are 0-based.  Every method is a bag of small MLPs stored by name in
a :class:`ParamSet`:

* ``f{k}``: representation model of client ``k`` (block width -> ``d_rep``)
* ``g{k}``: fusion model owned by client ``k`` (``d_rep`` -> classes)
* ``g``: the single joint fusion model of standard VFL / PlugVFL
* ``c{tag}/f{k}``, ``c{tag}/g``: per-subset predictors of the combinatorial
  baseline; singleton subsets reuse the ``f{k}``/``g{k}`` names so their
  initialization matches local training.

Representations are aggregated by an elementwise mean everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractError, DimensionError, InputError, UnavailableError
from .numerics import Node, Tape
from .rng import stream

METHODS = ("laser", "local", "standard", "ensemble", "combinatorial", "plugvfl")
COMBINATORIAL_MAX_K = 10


@dataclass(frozen=True)
class Arch:
    widths: tuple[int, ...]
    n_classes: int
    d_rep: int = 16
    hidden: tuple[int, ...] = (32,)

    def __post_init__(self):
        if not self.widths or min(self.widths) < 1:
            raise InputError(f"block widths must be positive, got {self.widths}")
        if self.n_classes < 2:
            raise InputError("need at least two classes")

    @property
    def K(self) -> int:
        return len(self.widths)

    def rep_sizes(self, k: int) -> list[int]:
        return [self.widths[k], *self.hidden, self.d_rep]

    def fusion_sizes(self) -> list[int]:
        return [self.d_rep, *self.hidden, self.n_classes]


def subsets(pool: Sequence[int], size: int | None = None) -> list[tuple[int, ...]]:
    """Nonempty subsets of ``pool`` as sorted tuples, by size then lexicographic."""
    pool = sorted(pool)
    sizes = [size] if size is not None else range(1, len(pool) + 1)
    return [c for s in sizes for c in combinations(pool, s)]


def subset_tag(I: Sequence[int]) -> str:
    return "-".join(str(i) for i in sorted(I))


@dataclass
class ParamSet:
    method: str
    arch: Arch
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "ParamSet":
        return ParamSet(self.method, self.arch, {n: t.copy() for n, t in self.tensors.items()})

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[n].ravel() for n in self.names()])


# ------------------------------------------------------------ initialization


def _init_mlp(tensors: dict, prefix: str, sizes: list[int], seed: int) -> None:
    for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        name = f"{prefix}.{layer}"
        s = math.sqrt(6.0 / (fan_in + fan_out))
        tensors[f"{name}.W"] = stream(seed, "init", f"{name}.W").uniform(-s, s, size=(fan_in, fan_out))
        tensors[f"{name}.b"] = np.zeros(fan_out)


def rep_prefix(k: int, task: Sequence[int] | None = None) -> str:
    if task is None or len(task) == 1:
        return f"f{k}"
    return f"c{subset_tag(task)}/f{k}"


def fusion_prefix(method: str, k: int | None = None, task: Sequence[int] | None = None) -> str:
    if method in ("standard", "plugvfl"):
        return "g"
    if method == "combinatorial" and task is not None and len(task) > 1:
        return f"c{subset_tag(task)}/g"
    if k is None:
        if task is None or len(task) != 1:
            raise ContractError(f"{method}: fusion model needs an owning client")
        k = task[0]
    return f"g{k}"


def init_params(method: str, arch: Arch, seed: int) -> ParamSet:
    """Fresh parameters for ``method``, seeded per tensor name."""
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; expected one of {METHODS}")
    t: dict[str, np.ndarray] = {}
    K = arch.K
    for k in range(K):
        _init_mlp(t, rep_prefix(k), arch.rep_sizes(k), seed)
    if method in ("standard", "plugvfl"):
        _init_mlp(t, "g", arch.fusion_sizes(), seed)
    else:
        for k in range(K):
            _init_mlp(t, f"g{k}", arch.fusion_sizes(), seed)
    if method == "combinatorial":
        if K > COMBINATORIAL_MAX_K:
            raise InputError(f"combinatorial baseline is capped at K={COMBINATORIAL_MAX_K}, got {K}")
        for I in subsets(range(K)):
            if len(I) == 1:
                continue
            for k in I:
                _init_mlp(t, rep_prefix(k, I), arch.rep_sizes(k), seed)
            _init_mlp(t, fusion_prefix(method, task=I), arch.fusion_sizes(), seed)
    return ParamSet(method, arch, t)


# ------------------------------------------------------------ graph plumbing


class Graph:
    """A tape plus lazily bound parameter leaves."""

    def __init__(self, params: ParamSet, tape: Tape | None = None):
        self.params = params
        self.tape = tape or Tape()
        self.bound: dict[str, Node] = {}

    def param(self, name: str) -> Node:
        node = self.bound.get(name)
        if node is None:
            try:
                value = self.params.tensors[name]
            except KeyError:
                raise ContractError(f"parameter {name!r} not in {self.params.method} ParamSet") from None
            node = self.bound[name] = self.tape.leaf(value)
        return node

    def input(self, x) -> Node:
        return self.tape.constant(x)

    def mlp(self, prefix: str, x: Node) -> Node:
        h = x
        layer = 0
        while f"{prefix}.{layer}.W" in self.params.tensors:
            if layer:
                h = self.tape.relu(h)
            h = self.tape.linear(h, self.param(f"{prefix}.{layer}.W"), self.param(f"{prefix}.{layer}.b"))
            layer += 1
        if layer == 0:
            raise ContractError(f"no layers under prefix {prefix!r}")
        return h

    def grads(self, loss: Node, seed=None) -> dict[str, np.ndarray]:
        """Gradient per bound parameter (zeros where unreachable)."""
        adj = self.tape.backward(loss, seed)
        return {n: adj.get(node.idx, np.zeros(node.shape)) for n, node in self.bound.items()}


def _block(x_blocks, k: int, arch: Arch):
    try:
        x = x_blocks[k]
    except (KeyError, IndexError):
        x = None
    if x is None:
        raise UnavailableError(f"block {k} is not observed")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != arch.widths[k]:
        raise InputError(f"block {k} must be B x {arch.widths[k]}, got {x.shape}")
    return x


def rep_node(graph: Graph, k: int, x: np.ndarray, task=None) -> Node:
    arch = graph.params.arch
    if x.ndim != 2 or x.shape[1] != arch.widths[k]:
        raise InputError(f"block {k} must be B x {arch.widths[k]}, got {x.shape}")
    return graph.mlp(rep_prefix(k, task), graph.input(x))


def laser_node(graph: Graph, k: int, I: Sequence[int], reps: Mapping[int, Node]) -> Node:
    """Logits of client ``k``'s predictor for task ``I`` from representation nodes."""
    if k not in I:
        raise ContractError(f"client {k} is not in task {tuple(I)}")
    agg = graph.tape.mean([reps[i] for i in sorted(I)])
    return graph.mlp(f"g{k}", agg)


# ------------------------------------------------------------ public ops


def representation_forward(k: int, x_k, params: ParamSet) -> np.ndarray:
    g = Graph(params)
    return rep_node(g, k, np.asarray(x_k, dtype=np.float64)).value


def aggregate_mean(reps: Sequence[np.ndarray]) -> np.ndarray:
    if not reps:
        raise ContractError("cannot aggregate zero representations")
    shape = np.shape(reps[0])
    acc = np.zeros(shape)
    for r in reps:
        if np.shape(r) != shape:
            raise DimensionError(f"representation shapes {shape} and {np.shape(r)} differ")
        acc = acc + r
    return acc / len(reps)


def predict_laser(k: int, I: Sequence[int], x_blocks, params: ParamSet) -> np.ndarray:
    if not I:
        raise ContractError("task set is empty")
    if k not in I:
        raise ContractError(f"client {k} is not in task {tuple(I)}")
    g = Graph(params)
    reps = {i: rep_node(g, i, _block(x_blocks, i, params.arch)) for i in sorted(I)}
    return laser_node(g, k, I, reps).value


def predict_local(k: int, x_k, params: ParamSet) -> np.ndarray:
    return predict_laser(k, (k,), {k: x_k}, params)


def predict_standard(x_blocks, params: ParamSet) -> np.ndarray:
    K = params.arch.K
    g = Graph(params)
    reps = [rep_node(g, k, _block(x_blocks, k, params.arch)) for k in range(K)]
    return g.mlp("g", g.tape.mean(reps)).value


def predict_plugvfl(x_blocks, params: ParamSet) -> np.ndarray:
    """Joint model with zero-filled representations for missing blocks."""
    K = params.arch.K
    g = Graph(params)
    present = {}
    for k in range(K):
        try:
            present[k] = rep_node(g, k, _block(x_blocks, k, params.arch))
        except UnavailableError:
            pass
    if not present:
        raise UnavailableError("no block observed")
    return g.mlp("g", zero_filled_mean(g, present, K, 0)).value


def zero_filled_mean(graph: Graph, present: Mapping[int, Node], K: int, rows: int) -> Node:
    """Mean over all K slots where absent representations count as zeros."""
    if not present:
        return graph.input(np.zeros((rows, graph.params.arch.d_rep)))
    nodes = [present[k] for k in sorted(present)]
    return graph.tape.scale(graph.tape.add(nodes), 1.0 / K)


def combinatorial_node(graph: Graph, I: Sequence[int], x_blocks) -> Node:
    I = tuple(sorted(I))
    if not I:
        raise ContractError("task set is empty")
    arch = graph.params.arch
    if any(i < 0 or i >= arch.K for i in I):
        raise ContractError(f"task {I} not indexed for K={arch.K}")
    reps = [rep_node(graph, i, _block(x_blocks, i, arch), task=I) for i in I]
    return graph.mlp(fusion_prefix("combinatorial", task=I), graph.tape.mean(reps))


def predict_combinatorial(I: Sequence[int], x_blocks, params: ParamSet) -> np.ndarray:
    if params.method != "combinatorial":
        raise ContractError("predict_combinatorial needs a combinatorial ParamSet")
    return combinatorial_node(Graph(params), I, x_blocks).value
