"""Named, reproducible random streams.

Every random quantity in a run is drawn from a generator derived from the run
seed plus a path of names (``stream(seed, "init", "f1.0.W")``).  Paths are
hashed with CRC-32, which is stable across processes and Python versions, and
fed to a counter-based Philox generator.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed: int, *path) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
