"""Grid runner: (method, train missingness, seed) jobs, each evaluated on every
test missingness, written as CSV artifacts under a config-hash directory."""

from __future__ import annotations

import csv
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import load_csv, parse_schema, synth_classification
from .inference import evaluate
from .missingness import sample_block_probs_beta, sample_mask_per_block
from .rng import stream
from .training import TrainConfig, save_message_log_csv, save_trace_csv, train

log = logging.getLogger(__name__)

RESULT_FIELDS = ["method", "p_miss_train", "p_miss_test", "seed", "accuracy", "f1", "n_fallbacks"]
AGG_FIELDS = [
    "method", "p_miss_train", "p_miss_test", "n_seeds",
    "accuracy_mean", "accuracy_std", "f1_mean", "f1_std", "n_fallbacks_mean",
]


@dataclass
class RunSummary:
    out_dir: Path
    n_rows: int
    failures: list

    @property
    def exit_code(self) -> int:
        return 2 if self.failures else 0


def _sub_seed(seed: int, *path) -> int:
    return int(stream(seed, *path).integers(2**62))


def p_label(p) -> str:
    return "beta" if p == "beta" else repr(float(p))


def load_data(cfg: RunConfig, seed: int):
    if cfg.source == "csv":
        schema = parse_schema(cfg.schema)
        train_ds = load_csv(cfg.resolve(cfg.train_path), schema, cfg.label_column)
        test_ds = load_csv(cfg.resolve(cfg.test_path), schema, cfg.label_column)
        C = max(train_ds.n_classes, test_ds.n_classes)
        train_ds.n_classes = test_ds.n_classes = C
        return train_ds, test_ds
    ds = synth_classification(
        cfg.n_train + cfg.n_test, cfg.K, list(cfg.block_widths()), cfg.n_classes, cfg.overlap, cfg.noise, seed
    )
    return ds.subset(np.arange(cfg.n_train)), ds.subset(np.arange(cfg.n_train, cfg.n_train + cfg.n_test))


def draw_mask(cfg: RunConfig, N: int, K: int, p, seed: int, split: str) -> np.ndarray:
    """Mask for one split; train and test use separate streams."""
    if p == "beta":
        probs = sample_block_probs_beta(K, cfg.beta_alpha, cfg.beta_beta, _sub_seed(seed, "beta", split))
    else:
        probs = np.full(K, float(p))
    return sample_mask_per_block(N, probs, _sub_seed(seed, "mask", split, p_label(p)))


def run_job(cfg: RunConfig, method: str, p_train, seed: int):
    """Train once and evaluate on every test grid value."""
    train_ds, test_ds = load_data(cfg, seed)
    mask = draw_mask(cfg, train_ds.N, train_ds.K, p_train, seed, "train")
    tcfg = TrainConfig(
        epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, seed=seed,
        d_rep=cfg.d_rep, hidden=tuple(cfg.hidden), dropout=cfg.dropout, log_messages=cfg.log_messages,
    )
    trace = train(method, train_ds, mask, tcfg)
    rows = []
    for p_test in cfg.p_miss_test:
        test_mask = draw_mask(cfg, test_ds.N, test_ds.K, p_test, seed, "test")
        rep = evaluate(method, trace.params, test_ds, test_mask, _sub_seed(seed, "eval", p_label(p_test)))
        rows.append({
            "method": method, "p_miss_train": p_label(p_train), "p_miss_test": p_label(p_test), "seed": seed,
            "accuracy": repr(rep.accuracy), "f1": "" if rep.f1 is None else repr(rep.f1),
            "n_fallbacks": rep.n_fallbacks,
        })
    return rows, trace


def _job_entry(args):
    cfg, method, p_train, seed, trace_dir = args
    try:
        rows, trace = run_job(cfg, method, p_train, seed)
    except Exception as exc:  # recorded, remaining jobs continue
        return None, f"{method} p_train={p_label(p_train)} seed={seed}: {exc!r}\n{traceback.format_exc()}"
    stem = f"{method}_ptrain{p_label(p_train)}_seed{seed}"
    save_trace_csv(trace, Path(trace_dir) / f"{stem}.csv")
    if cfg.log_messages:
        save_message_log_csv(trace.messages, Path(trace_dir) / f"{stem}_messages.csv")
    return rows, None


def threads_from_env() -> int:
    raw = os.environ.get("LASER_VFL_THREADS", "0").strip() or "0"
    return max(int(raw), 0)


def run_grid(cfg: RunConfig, threads: int | None = None) -> RunSummary:
    threads = threads_from_env() if threads is None else threads
    out = cfg.resolve(cfg.out_dir) / f"run-{cfg.digest()}"
    trace_dir = out / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    for stale in trace_dir.glob("*.csv"):
        stale.unlink()
    jobs = [(cfg, m, p, s, str(trace_dir)) for m in cfg.methods for p in cfg.p_miss_train for s in cfg.seeds]
    if threads > 0 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_job_entry, jobs))
    else:
        results = [_job_entry(j) for j in jobs]
    rows, failures = [], []
    for job_rows, err in results:
        if err:
            log.error(err)
            failures.append(err)
        else:
            rows.extend(job_rows)
    order = {
        "method": {m: i for i, m in enumerate(cfg.methods)},
        "p_miss_train": {p_label(p): i for i, p in enumerate(cfg.p_miss_train)},
        "p_miss_test": {p_label(p): i for i, p in enumerate(cfg.p_miss_test)},
    }
    rows.sort(key=lambda r: (order["method"][r["method"]], order["p_miss_train"][r["p_miss_train"]],
                             order["p_miss_test"][r["p_miss_test"]], r["seed"]))
    _write_csv(out / "results.csv", RESULT_FIELDS, rows)
    _write_csv(out / "aggregate.csv", AGG_FIELDS, aggregate(rows))
    with open(out / "failures.txt", "w", encoding="utf-8") as fh:
        fh.write("".join(f + "\n" for f in failures))
    return RunSummary(out, len(rows), failures)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _mean_std(values):
    if not values:
        return "", ""
    mean = math.fsum(values) / len(values)
    if len(values) < 2:
        return repr(mean), ""
    var = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return repr(mean), repr(math.sqrt(var))


def aggregate(rows):
    """Mean and sample standard deviation over seeds per grid cell."""
    cells: dict = {}
    for r in rows:
        cells.setdefault((r["method"], r["p_miss_train"], r["p_miss_test"]), []).append(r)
    out = []
    for (m, ptr, pte), rs in cells.items():
        acc_mean, acc_std = _mean_std([float(r["accuracy"]) for r in rs])
        f1_mean, f1_std = _mean_std([float(r["f1"]) for r in rs if r["f1"] != ""])
        fb_mean, _ = _mean_std([float(r["n_fallbacks"]) for r in rs])
        out.append({
            "method": m, "p_miss_train": ptr, "p_miss_test": pte, "n_seeds": len(rs),
            "accuracy_mean": acc_mean, "accuracy_std": acc_std, "f1_mean": f1_mean, "f1_std": f1_std,
            "n_fallbacks_mean": fb_mean,
        })
    return out


def with_overrides(cfg: RunConfig, out=None, methods=None, seeds=None) -> RunConfig:
    kw = {}
    if out is not None:
        kw["out_dir"] = str(Path(out).resolve())
    if methods is not None:
        kw["methods"] = tuple(m.strip() for m in methods.split(",") if m.strip())
    if seeds is not None:
        kw["seeds"] = tuple(int(s) for s in seeds.split(",") if s.strip())
    return replace(cfg, **kw)
