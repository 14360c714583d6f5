"""Block-level missingness: MCAR masks, availability statistics, and batching
of samples that share the same observed-block pattern.

A mask is an ``N x K`` boolean array; ``mask[n, k]`` is true when client ``k``
observes its block of sample ``n``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, ParseError
from .rng import stream


@dataclass
class PatternGroup:
    pattern: tuple[int, ...]
    indices: np.ndarray
    batches: list[np.ndarray] = field(default_factory=list)


def _check_prob(p, what="p_miss"):
    if not (0.0 <= float(p) <= 1.0):
        raise InputError(f"{what} must lie in [0, 1], got {p}")


def sample_mask_uniform(N: int, K: int, p_miss: float, seed: int) -> np.ndarray:
    _check_prob(p_miss)
    return sample_mask_per_block(N, np.full(K, float(p_miss)), seed)


def sample_mask_per_block(N: int, probs, seed: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise InputError("per-block probabilities must be a 1-d array")
    for k, p in enumerate(probs):
        _check_prob(p, f"p_miss[{k}]")
    u = stream(seed, "mask").random((int(N), probs.size))
    return u >= probs[None, :]


def sample_block_probs_beta(K: int, alpha: float, beta: float, seed: int) -> np.ndarray:
    """``K`` iid Beta(alpha, beta) missingness probabilities."""
    if alpha <= 0 or beta <= 0:
        raise InputError(f"Beta shape parameters must be positive, got ({alpha}, {beta})")
    # numpy draws Beta by Johnk's method for alpha, beta <= 1 and a gamma ratio otherwise
    return stream(seed, "beta").beta(alpha, beta, size=int(K))


def row_patterns(mask: np.ndarray) -> np.ndarray:
    """Bit-code per row: bit ``k`` set iff block ``k`` is observed."""
    mask = np.asarray(mask, dtype=bool)
    weights = np.left_shift(np.int64(1), np.arange(mask.shape[1], dtype=np.int64))
    return mask.astype(np.int64) @ weights


def decode_pattern(code: int, K: int) -> tuple[int, ...]:
    return tuple(k for k in range(K) if code >> k & 1)


def group_batches_by_pattern(mask: np.ndarray, batch_size: int, seed: int) -> list[PatternGroup]:
    """Partition samples by exact observed pattern and chunk each group.

    Groups come out ordered by (pattern size, pattern).  Rows with no observed
    block are left out.  The last batch of a group may be short.
    """
    if batch_size < 1:
        raise InputError("batch_size must be >= 1")
    mask = np.asarray(mask, dtype=bool)
    K = mask.shape[1]
    codes = row_patterns(mask)
    rng = stream(seed, "groups")
    groups = []
    patterns = sorted((decode_pattern(int(c), K) for c in np.unique(codes) if c), key=lambda p: (len(p), p))
    for pattern in patterns:
        code = sum(1 << k for k in pattern)
        idx = np.flatnonzero(codes == code)
        idx = idx[rng.permutation(idx.size)]
        batches = [idx[i : i + batch_size] for i in range(0, idx.size, batch_size)]
        groups.append(PatternGroup(pattern, idx, batches))
    return groups


def availability_stats(mask: np.ndarray) -> dict:
    mask = np.asarray(mask, dtype=bool)
    N, K = mask.shape
    codes = row_patterns(mask)
    uniq, counts = np.unique(codes, return_counts=True)
    hist = {decode_pattern(int(c), K): int(n) for c, n in zip(uniq, counts) if c}
    return {
        "fraction_fully_observed": float(mask.all(axis=1).sum() / N) if N else 0.0,
        "per_block_observed_rate": (mask.sum(axis=0) / N) if N else np.zeros(K),
        "pattern_histogram": hist,
    }


def save_mask_csv(mask: np.ndarray, path) -> None:
    mask = np.asarray(mask, dtype=bool)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", *(f"block_{k + 1}" for k in range(mask.shape[1]))])
        for n, row in enumerate(mask):
            w.writerow([n, *(int(v) for v in row)])


def load_mask_csv(path) -> np.ndarray:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty mask file")
    header = rows[0]
    K = len(header) - 1
    if header[0] != "sample_id" or header[1:] != [f"block_{k + 1}" for k in range(K)]:
        raise ParseError(f"{path}:1: bad mask header {header}")
    out = np.zeros((len(rows) - 1, K), dtype=bool)
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != K + 1:
            raise ParseError(f"{path}:{r}: expected {K + 1} fields, got {len(row)}")
        for c, v in enumerate(row[1:], start=1):
            if v not in ("0", "1"):
                raise ParseError(f"{path}:{r}:{c + 1}: mask values must be 0 or 1, got {v!r}")
            out[r - 2, c - 1] = v == "1"
    return out
