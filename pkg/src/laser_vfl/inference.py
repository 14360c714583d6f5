"""Inference under arbitrary observed-block patterns and client-averaged metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import PartitionedDataset
from .errors import InputError, UnavailableError
from .missingness import decode_pattern, row_patterns
from .model import (
    METHODS,
    ParamSet,
    predict_combinatorial,
    predict_laser,
    predict_local,
    predict_plugvfl,
    predict_standard,
)
from .rng import stream


@dataclass
class PredictionRecord:
    sample_id: int
    label: int
    preds: dict[int, int] = field(default_factory=dict)  # observing client -> class
    fallback: int | None = None  # random class used when no predictor could run
    method: str = ""


@dataclass
class MetricReport:
    accuracy: float
    f1: float | None
    per_client_accuracy: dict[int, float]
    n_fallbacks: int


def _argmax(logits: np.ndarray) -> np.ndarray:
    return np.argmax(logits, axis=1)  # first maximum wins


def infer_laser(x_blocks, K_o: Sequence[int], params: ParamSet) -> dict[int, np.ndarray]:
    """Each observing client predicts with its own fusion model over all observed blocks."""
    K_o = tuple(sorted(K_o))
    if not K_o:
        raise UnavailableError("no block observed")
    return {k: _argmax(predict_laser(k, K_o, x_blocks, params)) for k in K_o}


def majority_vote(votes: Sequence[int], u: float) -> int:
    """Most common vote; ties resolved by ``u`` in [0, 1) among the tied classes."""
    classes, counts = np.unique(np.asarray(votes), return_counts=True)
    tied = classes[counts == counts.max()]
    return int(tied[min(int(u * tied.size), tied.size - 1)])


def infer_baseline(method: str, x_blocks, K_o: Sequence[int], params: ParamSet, rand_class=None, tie_u=None):
    """Per-client predictions for a batch of rows sharing pattern ``K_o``.

    Returns ``(preds, used_fallback)`` where ``preds`` maps each observing
    client to a class array.  ``rand_class`` / ``tie_u`` are per-row random
    draws used for the random fallback and ensemble ties.
    """
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}")
    K_o = tuple(sorted(K_o))
    if not K_o:
        raise UnavailableError("no block observed")
    K = params.arch.K
    if method == "laser":
        return infer_laser(x_blocks, K_o, params), False
    if method == "local":
        return {k: _argmax(predict_local(k, x_blocks[k], params)) for k in K_o}, False
    if method == "ensemble":
        local = {k: _argmax(predict_local(k, x_blocks[k], params)) for k in K_o}
        rows = next(iter(local.values())).size
        u = np.zeros(rows) if tie_u is None else tie_u
        joint = np.array([majority_vote([local[k][n] for k in K_o], u[n]) for n in range(rows)], dtype=np.int64)
        return {k: joint for k in K_o}, False
    if method == "standard":
        if K_o != tuple(range(K)):
            if rand_class is None:
                raise UnavailableError("standard VFL needs every block")
            return {k: np.asarray(rand_class) for k in K_o}, True
        joint = _argmax(predict_standard(x_blocks, params))
        return {k: joint for k in K_o}, False
    if method == "combinatorial":
        joint = _argmax(predict_combinatorial(K_o, x_blocks, params))
        return {k: joint for k in K_o}, False
    joint = _argmax(predict_plugvfl({k: x_blocks[k] for k in K_o}, params))
    return {k: joint for k in K_o}, False


def predict_dataset(method: str, params: ParamSet, ds: PartitionedDataset, mask: np.ndarray, seed: int) -> list[PredictionRecord]:
    """Predictions for every test row, grouped by pattern for batched forwards."""
    mask = np.asarray(mask, dtype=bool)
    N = ds.N
    # per-sample random streams, independent of evaluation order
    rand_class = stream(seed, "eval", "fallback").integers(ds.n_classes, size=N)
    tie_u = stream(seed, "eval", "ties").random(N)
    records = [PredictionRecord(n, int(ds.labels[n]), method=method) for n in range(N)]
    codes = row_patterns(mask)
    for code in np.unique(codes):
        idx = np.flatnonzero(codes == code)
        pattern = decode_pattern(int(code), ds.K)
        if not pattern:
            for n in idx:
                records[n].fallback = int(rand_class[n])
            continue
        x = {k: ds.blocks[k][idx] for k in pattern}
        preds, used_fallback = infer_baseline(method, x, pattern, params, rand_class[idx], tie_u[idx])
        for j, n in enumerate(idx):
            records[n].preds = {k: int(preds[k][j]) for k in pattern}
            if used_fallback:
                records[n].fallback = int(rand_class[n])
    return records


def accuracy_avg(records: Sequence[PredictionRecord]) -> float:
    """100 * mean over samples of the fraction of observing clients that are right."""
    if not records:
        raise InputError("no records to score")
    total = 0.0
    for r in records:
        if r.preds:
            total += sum(1 for p in r.preds.values() if p == r.label) / len(r.preds)
        elif r.fallback is not None:
            total += float(r.fallback == r.label)
    return 100.0 * total / len(records)


def f1_macro(records: Sequence[PredictionRecord], K: int | None = None) -> float:
    """Client-averaged binary F1 (x100), each client scored on the rows it observed."""
    if any(r.label not in (0, 1) or any(p not in (0, 1) for p in r.preds.values()) for r in records):
        raise InputError("f1_macro needs binary labels and predictions")
    if K is None:
        K = 1 + max((k for r in records for k in r.preds), default=-1)
    scores = []
    for k in range(K):
        tp = fp = fn = 0
        for r in records:
            p = r.preds.get(k)
            if p is None:
                continue
            tp += p == 1 and r.label == 1
            fp += p == 1 and r.label == 0
            fn += p == 0 and r.label == 1
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return 100.0 * sum(scores) / K if K else 0.0


def evaluate(method: str, params: ParamSet, ds: PartitionedDataset, mask: np.ndarray, seed: int) -> MetricReport:
    records = predict_dataset(method, params, ds, mask, seed)
    per_client = {}
    for k in range(ds.K):
        seen = [r for r in records if k in r.preds]
        per_client[k] = 100.0 * sum(r.preds[k] == r.label for r in seen) / len(seen) if seen else float("nan")
    f1 = f1_macro(records, ds.K) if ds.n_classes == 2 else None
    return MetricReport(accuracy_avg(records), f1, per_client, sum(r.fallback is not None for r in records))
