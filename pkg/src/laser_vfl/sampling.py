"""Task sampling and the weighted multi-task loss.

For a batch whose rows all observe the blocks ``K_o``, the observed loss sums,
over every client ``k`` in ``K_o`` and every subset ``I`` of ``K_o`` that
contains ``k``, the task loss ``L_kI`` weighted by ``1 / |I|``.  That is
``|K_o| * 2**(|K_o| - 1)`` tasks.  The sampled estimate instead draws, for each
client and each size ``i``, one subset ``S_ki`` uniformly among the size-``i``
subsets containing ``k``, and weights it by ``a_i = C(|K_o| - 1, i - 1) / i``.
Each subset then carries weight ``1 / |I|`` in expectation, so the estimate is
unbiased while costing ``|K_o|**2`` task evaluations.

Both losses are expressed as ordered term lists ``(k, I, weight)`` so that the
same accumulation order serves float evaluation, tape recording, and the
quadratic testbed.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import CapacityError, ContractError, InputError
from .model import Graph, ParamSet, laser_node, rep_node, subsets
from .rng import stream

EXACT_MAX_BLOCKS = 12

TaskDraw = Mapping[int, Sequence[tuple[int, ...]]]
Term = tuple[int, tuple[int, ...], float]


def task_weight(i: int, K_o_size: int) -> float:
    if not (1 <= i <= K_o_size):
        raise InputError(f"cardinality {i} outside [1, {K_o_size}]")
    return float(Fraction(math.comb(K_o_size - 1, i - 1), i))


def sample_tasks(k: int, K_o: Sequence[int], rng: np.random.Generator) -> list[tuple[int, ...]]:
    """One uniformly drawn subset per size ``1..|K_o|``, each containing ``k``."""
    pattern = sorted(K_o)
    if k not in pattern:
        raise ContractError(f"client {k} is not in observed set {tuple(pattern)}")
    others = [j for j in pattern if j != k]
    out = []
    for i in range(1, len(pattern) + 1):
        pool = list(others)
        # partial Fisher-Yates: the first i-1 slots become a uniform (i-1)-subset
        for j in range(i - 1):
            r = j + int(rng.integers(len(pool) - j))
            pool[j], pool[r] = pool[r], pool[j]
        out.append(tuple(sorted([k, *pool[: i - 1]])))
    return out


def draw_tasks(K_o: Sequence[int], seed: int, step: int) -> dict[int, list[tuple[int, ...]]]:
    """Task draw for every client, each from its own sub-stream of the step seed."""
    return {k: sample_tasks(k, K_o, stream(seed, "tasks", step, k)) for k in sorted(K_o)}


def check_draw(K_o: Sequence[int], draw: TaskDraw) -> None:
    pattern = set(K_o)
    if set(draw) != pattern:
        raise ContractError(f"draw covers clients {sorted(draw)}, pattern is {sorted(pattern)}")
    for k, sets in draw.items():
        if len(sets) != len(pattern):
            raise ContractError(f"client {k}: need {len(pattern)} sets, got {len(sets)}")
        for i, S in enumerate(sets, start=1):
            if len(set(S)) != i or k not in S or not set(S) <= pattern:
                raise ContractError(f"client {k}: set #{i} {tuple(S)} is not an {i}-subset of the pattern holding {k}")


def estimator_terms(K_o: Sequence[int], draw: TaskDraw) -> list[Term]:
    check_draw(K_o, draw)
    n = len(K_o)
    return [
        (k, tuple(sorted(S)), task_weight(i, n))
        for k in sorted(K_o)
        for i, S in enumerate(draw[k], start=1)
    ]


def exact_terms(K_o: Sequence[int]) -> list[Term]:
    pattern = sorted(K_o)
    if len(pattern) > EXACT_MAX_BLOCKS:
        raise CapacityError(f"exact loss enumerates 2^{len(pattern) - 1} subsets per client; guard is {EXACT_MAX_BLOCKS} blocks")
    terms = []
    for k in pattern:
        others = [j for j in pattern if j != k]
        for i in range(1, len(pattern) + 1):
            for rest in subsets(others, i - 1) if i > 1 else [()]:
                terms.append((k, tuple(sorted((k, *rest))), 1.0 / i))
    return terms


def combine(terms: Sequence[Term], task_value: Callable[[int, tuple], float]) -> float:
    """Sum ``weight * task_value(k, I)`` per client, then across clients."""
    total = 0.0
    for k, client_terms in _by_client(terms):
        acc = 0.0
        for _, I, w in client_terms:
            acc = acc + w * task_value(k, I)
        total = total + acc
    return total


def _by_client(terms):
    out: dict[int, list] = {}
    for t in terms:
        out.setdefault(t[0], []).append(t)
    return sorted(out.items())


class LossGraph:
    """Recorded loss over a pattern batch; ``n_tasks`` counts predictor calls."""

    def __init__(self, params: ParamSet, batch, K_o: Sequence[int], terms: Sequence[Term]):
        self.graph = g = Graph(params)
        tape = g.tape
        self.reps = {i: rep_node(g, i, batch.blocks[i]) for i in sorted(K_o)}
        self.task_losses: dict[tuple[int, tuple], object] = {}
        client_nodes = []
        for k, client_terms in _by_client(terms):
            nodes = []
            for _, I, _w in client_terms:
                node = tape.softmax_xent(laser_node(g, k, I, self.reps), batch.labels)
                self.task_losses[(k, I)] = node
                nodes.append(node)
            client_nodes.append(tape.weighted_sum(nodes, [w for *_, w in client_terms]))
        self.client_losses = dict(zip((k for k, _ in _by_client(terms)), client_nodes))
        self.loss = tape.add(client_nodes)
        self.n_tasks = len(terms)

    @property
    def value(self) -> float:
        return float(self.loss.value)

    def grads(self) -> dict[str, np.ndarray]:
        return self.graph.grads(self.loss)


def _pattern(batch, K_o):
    K_o = tuple(sorted(K_o))
    if not K_o:
        raise ContractError("empty observed pattern")
    for k in K_o:
        if batch.blocks[k] is None:
            raise ContractError(f"pattern includes block {k} but the batch does not carry it")
    return K_o


def exact_observed_loss(batch, K_o: Sequence[int], params: ParamSet) -> float:
    K_o = _pattern(batch, K_o)
    return LossGraph(params, batch, K_o, exact_terms(K_o)).value


def estimate_loss(batch, K_o: Sequence[int], draw: TaskDraw, params: ParamSet) -> float:
    K_o = _pattern(batch, K_o)
    return LossGraph(params, batch, K_o, estimator_terms(K_o, draw)).value


def exact_loss_graph(batch, K_o, params) -> LossGraph:
    K_o = _pattern(batch, K_o)
    return LossGraph(params, batch, K_o, exact_terms(K_o))


def estimate_loss_graph(batch, K_o, draw, params) -> LossGraph:
    K_o = _pattern(batch, K_o)
    return LossGraph(params, batch, K_o, estimator_terms(K_o, draw))
