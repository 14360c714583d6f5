"""Run configuration: an INI file whose keys are :class:`RunConfig` field names.

Sections only group keys; ``[dataset]``, ``[experiment]``, ``[model]`` and
``[output]`` are conventional.  List values are comma separated.  Missingness
grids accept numbers in [0, 1] or the word ``beta``, which draws per-block
probabilities from Beta(beta_alpha, beta_beta).
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .model import METHODS


@dataclass
class RunConfig:
    # dataset
    source: str = "synthetic"
    n_train: int = 4000
    n_test: int = 1000
    K: int = 4
    widths: tuple[int, ...] = (8,)
    n_classes: int = 4
    overlap: float = 0.3
    noise: float = 2.0
    train_path: str = ""
    test_path: str = ""
    schema: str = ""
    label_column: str = "label"
    # experiment
    methods: tuple[str, ...] = METHODS
    p_miss_train: tuple = (0.0, 0.1, 0.5)
    p_miss_test: tuple = (0.0, 0.1, 0.5)
    beta_alpha: float = 2.0
    beta_beta: float = 2.0
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    epochs: int = 10
    batch_size: int = 64
    lr: float = 0.05
    dropout: float = 0.25
    log_messages: bool = False
    # model
    d_rep: int = 16
    hidden: tuple[int, ...] = (32,)
    # output
    out_dir: str = "runs"
    base_dir: str = field(default=".", repr=False)

    def block_widths(self) -> tuple[int, ...]:
        w = tuple(self.widths)
        return w * self.K if len(w) == 1 else w

    def digest(self) -> str:
        """Hash of everything that affects results (not where they are written)."""
        items = [(f.name, getattr(self, f.name)) for f in fields(self) if f.name not in ("out_dir", "base_dir")]
        return hashlib.sha256(repr(items).encode()).hexdigest()[:12]

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path


_LISTS = {"widths": int, "methods": str, "seeds": int, "hidden": int}
_GRIDS = ("p_miss_train", "p_miss_test")


def _grid_value(text):
    t = text.strip().lower()
    return "beta" if t == "beta" else float(t)


def _convert(name, raw: str, default):
    raw = raw.strip()
    if name in _LISTS:
        return tuple(_LISTS[name](v.strip()) for v in raw.split(",") if v.strip())
    if name in _GRIDS:
        return tuple(_grid_value(v) for v in raw.split(",") if v.strip())
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(path) -> tuple[RunConfig, list[str]]:
    """Parse without raising; returns the config plus a list of findings."""
    path = Path(path)
    findings: list[str] = []
    cfg = RunConfig(base_dir=str(path.parent))
    if not path.exists():
        return cfg, [f"config file {path} does not exist"]
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        return cfg, [f"config syntax: {exc}".replace("\n", " ")]
    known = {f.name: f for f in fields(RunConfig) if f.name != "base_dir"}
    values = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            if key not in known:
                findings.append(f"[{section}] {key}: unknown field")
                continue
            try:
                values[key] = _convert(key, raw, getattr(cfg, key))
            except ValueError as exc:
                findings.append(f"{key}: cannot parse {raw!r} ({exc})")
    cfg = dataclasses.replace(cfg, **values)
    return cfg, findings + check_config(cfg)


def check_config(cfg: RunConfig) -> list[str]:
    out = []
    if cfg.source not in ("synthetic", "csv"):
        out.append(f"source: must be 'synthetic' or 'csv', got {cfg.source!r}")
    if not cfg.methods:
        out.append("methods: at least one method required")
    for m in cfg.methods:
        if m not in METHODS:
            out.append(f"methods: unknown method {m!r}")
    if not cfg.seeds:
        out.append("seeds: at least one seed required")
    for name in _GRIDS:
        grid = getattr(cfg, name)
        if not grid:
            out.append(f"{name}: at least one value required")
        for p in grid:
            if p != "beta" and not 0.0 <= p <= 1.0:
                out.append(f"{name}: probability {p} outside [0, 1]")
    for name in ("beta_alpha", "beta_beta", "lr"):
        if getattr(cfg, name) <= 0:
            out.append(f"{name}: must be positive")
    if not 0.0 <= cfg.dropout <= 1.0:
        out.append(f"dropout: probability {cfg.dropout} outside [0, 1]")
    for name in ("epochs", "batch_size", "d_rep", "K", "n_classes"):
        if getattr(cfg, name) < 1:
            out.append(f"{name}: must be >= 1")
    if cfg.source == "synthetic":
        if cfg.n_train < 1 or cfg.n_test < 1:
            out.append("n_train/n_test: must be >= 1")
        if len(cfg.widths) not in (1, cfg.K):
            out.append(f"widths: give one width or K={cfg.K} widths")
        if not 0.0 <= cfg.overlap <= 1.0:
            out.append(f"overlap: {cfg.overlap} outside [0, 1]")
    else:
        for name in ("train_path", "test_path"):
            p = getattr(cfg, name)
            if not p:
                out.append(f"{name}: required when source = csv")
            elif not cfg.resolve(p).exists():
                out.append(f"{name}: file {p} does not exist")
        if not cfg.schema:
            out.append("schema: required when source = csv")
    return out


def load_config(path) -> RunConfig:
    cfg, findings = parse_config(path)
    if findings:
        raise ConfigError("; ".join(findings))
    return cfg
