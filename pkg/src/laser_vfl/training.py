"""Training loops: the split protocol over simulated clients, and baselines.

One LASER step runs in phases separated by barriers:

1. every participating client computes its representation on its own tape
   and broadcasts it;
2. each client draws its tasks, evaluates its share of the loss estimate on a
   fresh tape whose leaves are the received representations, backpropagates
   through its fusion model and returns each producer the gradient with
   respect to that producer's representation;
3. each producer sums the returned gradients in ascending sender order and
   backpropagates through its representation model;
4. all parameters are updated together.

Clients run one after another inside each phase; the barriers make the
result independent of that order.  Only representation and gradient arrays
cross client boundaries, as recorded in the message log.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Batch, PartitionedDataset
from .errors import ContractError, DimensionError, InputError, ProtocolError
from .missingness import group_batches_by_pattern
from .model import (
    METHODS,
    Arch,
    Graph,
    ParamSet,
    combinatorial_node,
    init_params,
    laser_node,
    rep_node,
    subsets,
    zero_filled_mean,
)
from .rng import stream
from .sampling import draw_tasks, estimate_loss_graph, exact_observed_loss, sample_tasks, task_weight

REP_BROADCAST = "RepBroadcast"
GRAD_RETURN = "GradReturn"


@dataclass
class Message:
    kind: str
    sender: int
    receiver: int
    step: int
    payload: np.ndarray

    @property
    def shape(self) -> tuple:
        return self.payload.shape


@dataclass
class TraceRecord:
    step: int
    pattern: tuple[int, ...]
    loss_est: float
    grad_norm: float
    loss_exact: float | None = None
    wall_time: float = 0.0
    parts: dict = field(default_factory=dict)
    note: str = ""


@dataclass
class TrainTrace:
    method: str
    records: list[TraceRecord] = field(default_factory=list)
    params: ParamSet | None = None
    messages: list[Message] = field(default_factory=list)

    def for_pattern(self, pattern) -> list[TraceRecord]:
        return [r for r in self.records if r.pattern == tuple(pattern)]


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 0.05
    seed: int = 0
    d_rep: int = 16
    hidden: tuple[int, ...] = (32,)
    dropout: float = 0.25
    lr_mode: str = "constant"  # or "inv_sqrt_T": lr / sqrt(total steps)
    trace_exact: bool = False
    log_messages: bool = False


# ------------------------------------------------------------ message harness


def harness_deliver(messages: Sequence[Message], participants: Sequence[int], step: int, kind: str = REP_BROADCAST):
    """Barrier: route step-``step`` messages of ``kind`` into per-client inboxes.

    Every participant must have sent to every other participant; inboxes are
    ordered by ascending sender id.
    """
    parts = sorted(participants)
    sent = {(m.sender, m.receiver) for m in messages if m.kind == kind and m.step == step}
    for s in parts:
        for r in parts:
            if s != r and (s, r) not in sent:
                raise ProtocolError(f"step {step}: client {s} sent no {kind} to client {r}")
    inboxes: dict[int, list[Message]] = {k: [] for k in parts}
    for m in sorted(messages, key=lambda m: (m.receiver, m.sender)):
        if m.kind == kind and m.step == step and m.receiver in inboxes:
            inboxes[m.receiver].append(m)
    return inboxes


class ClientNode:
    """Client ``k``: holds only its own feature block."""

    def __init__(self, k: int, block: np.ndarray):
        self.k = k
        self.block = block
        self._rep_graph = None
        self._rep = None

    def represent(self, params: ParamSet, idx: np.ndarray) -> np.ndarray:
        self._rep_graph = Graph(params)
        self._rep = rep_node(self._rep_graph, self.k, self.block[idx])
        return self._rep.value

    def fuse(self, params, pattern, received: dict[int, np.ndarray], labels, tasks):
        """Local share of the loss estimate.

        Returns the loss value, gradients of this client's fusion parameters,
        and the gradient with respect to every received representation.
        """
        g = Graph(params)
        leaves = {i: g.tape.leaf(received[i]) for i in sorted(received)}
        n = len(pattern)
        nodes, weights = [], []
        for i, S in enumerate(tasks, start=1):
            S = tuple(sorted(S))
            if len(S) != i or self.k not in S or not set(S) <= set(pattern):
                raise ContractError(f"client {self.k}: bad task set {S}")
            nodes.append(g.tape.softmax_xent(laser_node(g, self.k, S, leaves), labels))
            weights.append(task_weight(i, n))
        loss = g.tape.weighted_sum(nodes, weights)
        adj = g.tape.backward(loss)
        fusion_grads = {nm: adj.get(node.idx, np.zeros(node.shape)) for nm, node in g.bound.items()}
        rep_grads = {i: adj.get(leaf.idx, np.zeros(leaf.shape)) for i, leaf in leaves.items()}
        return float(loss.value), fusion_grads, rep_grads

    def backprop(self, upstream: list[tuple[int, np.ndarray]]) -> dict[str, np.ndarray]:
        total = np.zeros(self._rep.shape)
        for _sender, grad in sorted(upstream, key=lambda t: t[0]):
            total = total + grad
        return self._rep_graph.grads(self._rep, seed=total)


def laser_distributed_grads(step: int, dataset_blocks, batch: Batch, pattern, params: ParamSet, seed: int, log=None):
    """Loss estimate and gradient through the simulated split protocol."""
    pattern = tuple(sorted(pattern))
    if not pattern:
        raise ContractError("empty pattern")
    clients = {k: ClientNode(k, dataset_blocks[k]) for k in pattern}
    draw = {}
    outbox: list[Message] = []

    reps = {}
    for k in pattern:
        reps[k] = clients[k].represent(params, batch.indices)
        for r in pattern:
            if r != k:
                outbox.append(Message(REP_BROADCAST, k, r, step, reps[k]))
    inboxes = harness_deliver(outbox, pattern, step, REP_BROADCAST)

    grads: dict[str, np.ndarray] = {}
    returns: list[Message] = []
    own_grad = {}
    losses = {}
    for k in pattern:
        received = {m.sender: m.payload for m in inboxes[k]}
        received[k] = reps[k]
        for i, v in received.items():
            if v.shape != reps[k].shape:
                raise DimensionError(f"client {k} got a {v.shape} representation from {i}")
        draw[k] = sample_tasks(k, pattern, stream(seed, "tasks", step, k))
        losses[k], g_fuse, rep_grads = clients[k].fuse(params, pattern, received, batch.labels, draw[k])
        grads.update(g_fuse)
        own_grad[k] = rep_grads[k]
        for i in pattern:
            if i != k:
                returns.append(Message(GRAD_RETURN, k, i, step, rep_grads[i]))
    grad_inbox = harness_deliver(returns, pattern, step, GRAD_RETURN)

    for k in pattern:
        upstream = [(m.sender, m.payload) for m in grad_inbox[k]] + [(k, own_grad[k])]
        for m in grad_inbox[k]:
            if m.payload.shape != reps[k].shape:
                raise DimensionError(f"gradient for client {k} has shape {m.payload.shape}")
        grads.update(clients[k].backprop(upstream))
    if log is not None:
        log.extend(outbox)
        log.extend(returns)
    total = 0.0
    for k in pattern:
        total = total + losses[k]
    return total, grads, draw


def monolithic_grads(step: int, batch: Batch, pattern, params: ParamSet, seed: int):
    """Same step evaluated as one graph and differentiated end to end."""
    draw = draw_tasks(pattern, seed, step)
    lg = estimate_loss_graph(batch, pattern, draw, params)
    return lg.value, lg.grads(), draw


# ------------------------------------------------------------ updates


def sgd_update(params: ParamSet, grads: dict[str, np.ndarray], lr: float) -> ParamSet:
    new = params.copy()
    for name, g in grads.items():
        new.tensors[name] = params.tensors[name] - lr * g
    return new


def grad_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for name in sorted(grads):
        g = grads[name]
        total += float(np.sum(g * g))
    return math.sqrt(total)


def laser_train_step(step: int, dataset: PartitionedDataset, batch: Batch, pattern, params: ParamSet, lr: float, seed: int, log=None, trace_exact=False):
    """One split-protocol SGD step; returns ``(new_params, TraceRecord)``."""
    pattern = tuple(sorted(pattern))
    if lr < 0:
        raise InputError("learning rate must be >= 0")
    t0 = time.perf_counter()
    if not pattern:
        return params, TraceRecord(step, (), float("nan"), 0.0, note="empty pattern, step skipped")
    exact = exact_observed_loss(batch, pattern, params) if trace_exact else None
    loss, grads, _ = laser_distributed_grads(step, dataset.blocks, batch, pattern, params, seed, log)
    new = sgd_update(params, grads, lr)
    return new, TraceRecord(step, pattern, loss, grad_norm(grads), exact, time.perf_counter() - t0)


def _xent(graph, logits, labels):
    return graph.tape.softmax_xent(logits, labels)


def local_grads(batch: Batch, k: int, params: ParamSet):
    g = Graph(params)
    loss = _xent(g, laser_node(g, k, (k,), {k: rep_node(g, k, batch.blocks[k])}), batch.labels)
    return float(loss.value), g.grads(loss)


def standard_grads(batch: Batch, params: ParamSet):
    g = Graph(params)
    reps = [rep_node(g, k, batch.blocks[k]) for k in range(params.arch.K)]
    loss = _xent(g, g.mlp("g", g.tape.mean(reps)), batch.labels)
    return float(loss.value), g.grads(loss)


def plugvfl_grads(batch: Batch, pattern, params: ParamSet, dropped: Sequence[int]):
    g = Graph(params)
    present = {k: rep_node(g, k, batch.blocks[k]) for k in pattern if k not in dropped}
    agg = zero_filled_mean(g, present, params.arch.K, len(batch))
    loss = _xent(g, g.mlp("g", agg), batch.labels)
    return float(loss.value), g.grads(loss)


def combinatorial_grads(batch: Batch, pattern, params: ParamSet):
    """Every predictor whose subset is observed trains on the batch."""
    g = Graph(params)
    nodes, parts = [], {}
    for I in subsets(pattern):
        node = _xent(g, combinatorial_node(g, I, batch.blocks), batch.labels)
        parts[I] = float(node.value)
        nodes.append(node)
    loss = g.tape.add(nodes)
    return float(loss.value), g.grads(loss), parts


def plugvfl_dropped(pattern, seed: int, step: int, p: float) -> tuple[int, ...]:
    """Passive parties (every client but 0) silenced this step."""
    rng = stream(seed, "dropout", step)
    u = rng.random(max(pattern, default=0) + 1)
    return tuple(k for k in pattern if k != 0 and u[k] < p)


# ------------------------------------------------------------ scheduling


def epoch_batches(mask: np.ndarray, batch_size: int, seed: int, epoch: int):
    """``(pattern, indices)`` for one epoch, batches of all patterns interleaved."""
    group_seed = int(stream(seed, "groups", epoch).integers(2**62))
    groups = group_batches_by_pattern(mask, batch_size, group_seed)
    batches = [(grp.pattern, b) for grp in groups for b in grp.batches]
    order = stream(seed, "order", epoch).permutation(len(batches))
    return [batches[i] for i in order]


def _lr(cfg: TrainConfig, total_steps: int) -> float:
    if cfg.lr_mode == "constant":
        return cfg.lr
    if cfg.lr_mode == "inv_sqrt_T":
        return cfg.lr / math.sqrt(max(total_steps, 1))
    raise InputError(f"unknown lr_mode {cfg.lr_mode!r}")


def train(method: str, dataset: PartitionedDataset, mask: np.ndarray, config: TrainConfig, params: ParamSet | None = None) -> TrainTrace:
    """Train ``method`` on the observed part of ``dataset``."""
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; expected one of {METHODS}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (dataset.N, dataset.K):
        raise DimensionError(f"mask shape {mask.shape} does not match dataset ({dataset.N}, {dataset.K})")
    arch = Arch(dataset.widths, dataset.n_classes, config.d_rep, tuple(config.hidden))
    params = params if params is not None else init_params(method, arch, config.seed)
    trace = TrainTrace(method)
    if method in ("local", "ensemble"):
        params = _train_local(dataset, mask, config, params, trace)
    else:
        params = _train_joint(method, dataset, mask, config, params, trace)
    trace.params = params
    return trace


def _train_local(ds, mask, cfg, params, trace):
    schedules = {
        k: [b for e in range(cfg.epochs) for b in epoch_batches(mask[:, [k]], cfg.batch_size, cfg.seed, e)]
        for k in range(ds.K)
    }
    step = 0
    for k in range(ds.K):
        lr = _lr(cfg, len(schedules[k]))
        for _pattern, idx in schedules[k]:
            t0 = time.perf_counter()
            batch = ds.batch(idx, (k,))
            loss, grads = local_grads(batch, k, params)
            params = sgd_update(params, grads, lr)
            trace.records.append(TraceRecord(step, (k,), loss, grad_norm(grads), None, time.perf_counter() - t0, {(k,): loss}))
            step += 1
    return params


def _train_joint(method, ds, mask, cfg, params, trace):
    schedule = [b for e in range(cfg.epochs) for b in epoch_batches(mask, cfg.batch_size, cfg.seed, e)]
    full = tuple(range(ds.K))
    if method == "standard":
        schedule = [b for b in schedule if b[0] == full]
    lr = _lr(cfg, len(schedule))
    log = trace.messages if cfg.log_messages else None
    for step, (pattern, idx) in enumerate(schedule):
        batch = ds.batch(idx, pattern)
        if method == "laser":
            params, rec = laser_train_step(step, ds, batch, pattern, params, lr, cfg.seed, log, cfg.trace_exact)
            trace.records.append(rec)
            continue
        t0 = time.perf_counter()
        parts = {}
        if method == "standard":
            loss, grads = standard_grads(batch, params)
        elif method == "plugvfl":
            loss, grads = plugvfl_grads(batch, pattern, params, plugvfl_dropped(pattern, cfg.seed, step, cfg.dropout))
        else:
            loss, grads, parts = combinatorial_grads(batch, pattern, params)
        params = sgd_update(params, grads, lr)
        trace.records.append(TraceRecord(step, pattern, loss, grad_norm(grads), None, time.perf_counter() - t0, parts))
    return params


# ------------------------------------------------------------ export


def pattern_label(pattern) -> str:
    return "-".join(str(k + 1) for k in pattern)


def save_trace_csv(trace: TrainTrace, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "pattern", "loss_est", "loss_exact", "grad_norm"])
        for r in trace.records:
            exact = "" if r.loss_exact is None else repr(r.loss_exact)
            w.writerow([r.step, pattern_label(r.pattern), repr(r.loss_est), exact, repr(r.grad_norm)])


def save_message_log_csv(messages: Sequence[Message], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "kind", "sender", "receiver", "rows", "cols"])
        for m in messages:
            rows, cols = m.payload.shape
            w.writerow([m.step, m.kind, m.sender + 1, m.receiver + 1, rows, cols])
