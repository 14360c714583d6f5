"""Feature-partitioned datasets: synthetic generator, CSV I/O, and a quadratic
testbed with known smoothness and PL constants for convergence checks."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError, ParseError
from .rng import stream
from .sampling import combine, estimator_terms, exact_terms, sample_tasks


@dataclass
class Batch:
    """Rows of a dataset restricted to the blocks of one observed pattern."""

    indices: np.ndarray
    blocks: list  # per client: B x n_k array, or None when unobserved
    labels: np.ndarray

    def __len__(self):
        return self.labels.size


@dataclass
class PartitionedDataset:
    blocks: list[np.ndarray]
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        N = self.labels.size
        for k, b in enumerate(self.blocks):
            if b.ndim != 2 or b.shape[0] != N:
                raise InputError(f"block {k} has shape {b.shape}, expected {N} rows")
        if N and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise InputError(f"labels must lie in [0, {self.n_classes})")

    @property
    def N(self) -> int:
        return self.labels.size

    @property
    def K(self) -> int:
        return len(self.blocks)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(b.shape[1] for b in self.blocks)

    def full(self) -> np.ndarray:
        return np.concatenate(self.blocks, axis=1)

    def subset(self, idx) -> "PartitionedDataset":
        idx = np.asarray(idx)
        return PartitionedDataset([b[idx] for b in self.blocks], self.labels[idx], self.n_classes)

    def batch(self, idx, pattern: Sequence[int] | None = None) -> Batch:
        idx = np.asarray(idx)
        keep = range(self.K) if pattern is None else set(pattern)
        blocks = [self.blocks[k][idx] if k in keep else None for k in range(self.K)]
        return Batch(idx, blocks, self.labels[idx])


def _split(full: np.ndarray, widths) -> list[np.ndarray]:
    edges = np.cumsum([0, *widths])
    return [full[:, a:b].copy() for a, b in zip(edges[:-1], edges[1:])]


def synth_classification(
    N: int,
    K: int = 4,
    widths: Sequence[int] | int = 8,
    C: int = 4,
    informative_overlap: float = 0.3,
    noise: float = 2.0,
    seed: int = 0,
) -> PartitionedDataset:
    """Gaussian class-conditional mixture split into ``K`` blocks.

    Block ``k`` of class ``c`` is centred at
    ``sqrt(overlap) * M_k s_c + sqrt(1 - overlap) * p_ck``: ``s_c`` is a class
    signal shared by all blocks (seen through a per-block projection ``M_k``),
    ``p_ck`` is private to the block.  Higher overlap means more redundancy
    between blocks; any overlap below 1 leaves each block with information
    the others lack.  Isotropic noise with std ``noise`` is added and every
    column is standardized.
    """
    if isinstance(widths, int):
        widths = [widths] * K
    widths = [int(w) for w in widths]
    if len(widths) != K or min(widths, default=0) < 1:
        raise InputError(f"need {K} positive block widths, got {widths}")
    if C < 2:
        raise InputError("C must be >= 2")
    if not 0.0 <= informative_overlap <= 1.0:
        raise InputError("informative_overlap must lie in [0, 1]")
    if noise < 0 or N < 1:
        raise InputError("noise must be >= 0 and N >= 1")
    r = max(widths)
    gen = stream(seed, "synth", "structure")
    shared = gen.standard_normal((C, r))
    means = []
    for k, w in enumerate(widths):
        M, _ = np.linalg.qr(gen.standard_normal((r, r)))
        private = gen.standard_normal((C, w))
        means.append(np.sqrt(informative_overlap) * shared @ M[:, :w] + np.sqrt(1.0 - informative_overlap) * private)
    labels = stream(seed, "synth", "labels").integers(C, size=N)
    eps = stream(seed, "synth", "noise").standard_normal((N, sum(widths)))
    full = np.concatenate([m[labels] for m in means], axis=1) + noise * eps
    sd = full.std(axis=0)
    full = (full - full.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    return PartitionedDataset(_split(full, widths), labels, C)


# ------------------------------------------------------------------ CSV


def save_csv(ds: PartitionedDataset, path) -> None:
    full = ds.full()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", *(f"x{j}" for j in range(full.shape[1])), "label"])
        for n in range(ds.N):
            w.writerow([n, *(repr(float(v)) for v in full[n]), int(ds.labels[n])])


def parse_schema(text: str) -> list[tuple[int, int]]:
    """``"0:8,8:16"`` -> ``[(0, 8), (8, 16)]``."""
    out = []
    for part in text.split(","):
        try:
            a, b = part.strip().split(":")
            out.append((int(a), int(b)))
        except ValueError:
            raise ParseError(f"schema entry {part!r} is not start:stop") from None
    return out


def load_csv(path, schema: Sequence[tuple[int, int]], label_column: str = "label", n_classes: int | None = None):
    """Read a feature CSV and assign feature columns to blocks.

    ``schema`` lists half-open column ranges over the feature columns (those
    other than ``sample_id`` and the label) and must tile them exactly.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = rows[0]
    if label_column not in header:
        raise ParseError(f"{path}:1: no {label_column!r} column")
    feat_cols = [j for j, h in enumerate(header) if h not in ("sample_id", label_column)]
    n_feat = len(feat_cols)
    _check_schema(schema, n_feat, path)
    lab_col = header.index(label_column)
    X = np.empty((len(rows) - 1, n_feat))
    y = np.empty(len(rows) - 1, dtype=np.int64)
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}:{r}: expected {len(header)} fields, got {len(row)}")
        for out_j, j in enumerate(feat_cols):
            try:
                X[r - 2, out_j] = float(row[j])
            except ValueError:
                raise ParseError(f"{path}:{r}:{j + 1}: non-numeric value {row[j]!r}") from None
        try:
            y[r - 2] = int(row[lab_col])
        except ValueError:
            raise ParseError(f"{path}:{r}:{lab_col + 1}: label {row[lab_col]!r} is not an integer") from None
    if y.size and y.min() < 0:
        raise ParseError(f"{path}: negative labels")
    C = n_classes if n_classes is not None else (int(y.max()) + 1 if y.size else 2)
    return PartitionedDataset([X[:, a:b].copy() for a, b in schema], y, max(C, 2))


def _check_schema(schema, n_feat, where):
    covered = np.zeros(n_feat, dtype=int)
    for a, b in schema:
        if not (0 <= a < b <= n_feat):
            raise ParseError(f"{where}: schema range [{a}, {b}) outside the {n_feat} feature columns")
        covered[a:b] += 1
    if not schema or not np.all(covered == 1):
        raise ParseError(f"{where}: schema must cover each of the {n_feat} feature columns exactly once")


# ------------------------------------------------------------------ quadratic testbed


class QuadraticTestbed:
    """Multi-task quadratic with the same task structure as the VFL objective.

    Each task ``(k, I)`` over ``K`` virtual blocks has loss
    ``1/2 (x - c_kI)' H_kI (x - c_kI)`` and the objective is the ``1/|I|``
    weighted sum over all tasks.  The ``H_kI`` are built so the total Hessian
    has eigenvalues spanning exactly ``[mu, L]``.  ``spread`` scales how far
    task optima disagree, which sets the task-sampling noise floor.
    """

    def __init__(self, dim: int, condition_number: float, seed: int = 0, K: int = 3, spread: float = 1.0, L: float = 1.0):
        if condition_number < 1:
            raise InputError("condition_number must be >= 1")
        gen = stream(seed, "quadratic")
        self.dim, self.K = dim, K
        Q, _ = np.linalg.qr(gen.standard_normal((dim, dim)))
        eig = np.linspace(L / condition_number, L, dim) if dim > 1 else np.array([L])
        H = (Q * eig) @ Q.T
        H_half = (Q * np.sqrt(eig)) @ Q.T
        self.terms = exact_terms(range(K))
        raw = {}
        for k, I, _w in self.terms:
            G = gen.standard_normal((dim, dim))
            raw[(k, I)] = G @ G.T / dim + 0.1 * np.eye(dim)
        S = sum(w * raw[(k, I)] for k, I, w in self.terms)
        s_eig, s_vec = np.linalg.eigh(S)
        S_mhalf = (s_vec / np.sqrt(s_eig)) @ s_vec.T
        T = H_half @ S_mhalf
        self.H_task = {key: T @ M @ T.T for key, M in raw.items()}
        self.c_task = {key: spread * gen.standard_normal(dim) for key in raw}
        self.hessian = sum(w * self.H_task[(k, I)] for k, I, w in self.terms)
        ev = np.linalg.eigvalsh(self.hessian)
        self.mu, self.L = float(ev[0]), float(ev[-1])
        rhs = sum(w * self.H_task[(k, I)] @ self.c_task[(k, I)] for k, I, w in self.terms)
        self.x_star = np.linalg.solve(self.hessian, rhs)
        self.f_star = self.value(self.x_star)

    def task_value(self, k, I, x):
        d = x - self.c_task[(k, I)]
        return 0.5 * d @ self.H_task[(k, I)] @ d

    def task_grad(self, k, I, x):
        return self.H_task[(k, I)] @ (x - self.c_task[(k, I)])

    def value(self, x) -> float:
        return float(combine(self.terms, lambda k, I: self.task_value(k, I, x)))

    def grad(self, x) -> np.ndarray:
        return combine(self.terms, lambda k, I: self.task_grad(k, I, x))

    def sampled_grad(self, x, rng) -> np.ndarray:
        blocks = list(range(self.K))
        draw = {k: sample_tasks(k, blocks, rng) for k in blocks}
        return combine(estimator_terms(blocks, draw), lambda k, I: self.task_grad(k, I, x))

    def run(self, x0, lr: float, steps: int, sampled: bool = False, seed: int = 0):
        """Gradient descent; returns (suboptimality, squared gradient norm) per iterate."""
        rng = stream(seed, "quadratic", "run")
        x = np.array(x0, dtype=np.float64)
        subopt = np.empty(steps + 1)
        gnorm2 = np.empty(steps + 1)
        for t in range(steps + 1):
            g = self.grad(x)
            subopt[t] = self.value(x) - self.f_star
            gnorm2[t] = g @ g
            if t < steps:
                x = x - lr * (self.sampled_grad(x, rng) if sampled else g)
        return subopt, gnorm2


def quadratic_testbed(dim: int, condition_number: float, seed: int = 0, **kw) -> QuadraticTestbed:
    return QuadraticTestbed(dim, condition_number, seed, **kw)
