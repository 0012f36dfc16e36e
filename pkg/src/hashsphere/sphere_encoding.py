"""Hash-sphere: multilevel geodesic-grid encoding of directions.

At each level the direction's enclosing triangle is found (by refining the
previous level's triangle), its three vertices are mapped to table rows by
:func:`hashing.phi_sphere`, and the rows are blended with the barycentric
weights. Level features are concatenated, coarsest first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geodesic
from .geodesic import build_dense_tables, vertex_count
from .hashing import ConfigError, HashConfig, hash_sphere
from .interp import GradientBuffer, LevelLookup, ShapeError, check_tables, gather, scatter, scatter_sparse

MAX_LEVELS = 12
INIT_RANGE = 1e-4


@dataclass(frozen=True)
class HashSphereConfig:
    levels: int = 8
    features: int = 2
    hash: HashConfig = field(default_factory=HashConfig)

    def __post_init__(self):
        if not 1 <= self.levels <= MAX_LEVELS:
            raise ConfigError(f"levels must be in [1, {MAX_LEVELS}]")
        if self.features not in (1, 2, 4, 8):
            raise ConfigError("features per level must be 1, 2, 4 or 8")
        if self.last_dense_level > geodesic.MAX_DENSE_LEVEL:
            raise ConfigError("table cap makes levels beyond 8 dense; lower T")

    @property
    def table_cap(self) -> int:
        return self.hash.table_cap

    def is_dense(self, level: int) -> bool:
        return vertex_count(level) <= self.table_cap

    @property
    def last_dense_level(self) -> int:
        """Deepest dense level, or -1 when even level 0 is hashed."""
        dense = [lvl for lvl in range(self.levels) if self.is_dense(lvl)]
        return dense[-1] if dense else -1

    def table_rows(self) -> list[int]:
        return [min(self.table_cap, vertex_count(lvl)) for lvl in range(self.levels)]

    @property
    def output_width(self) -> int:
        return self.levels * self.features


def init_params(cfg: HashSphereConfig, seed: int, dtype=np.float32) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [
        rng.uniform(-INIT_RANGE, INIT_RANGE, size=(rows, cfg.features)).astype(dtype)
        for rows in cfg.table_rows()
    ]


def lookup(dirs, cfg: HashSphereConfig) -> list[LevelLookup]:
    """Per-level table rows and barycentric weights for an ``(n, 3)`` batch."""
    d = geodesic.as_directions(dirs).reshape(-1, 3)
    tables = build_dense_tables(cfg.last_dense_level) if cfg.last_dense_level >= 0 else None
    cap = np.uint64(cfg.table_cap)
    out = []
    for level, face, tri, bary in geodesic.traverse(d, cfg.levels):
        if cfg.is_dense(level):
            rows = tables.faces[level][face]
        else:
            # Hashed levels only need the vertex positions of the traversal.
            rows = (hash_sphere(tri, cfg.hash) % cap).astype(np.int64)
        out.append(LevelLookup(rows, bary))
    return out


def encode_batch(dirs, params, cfg: HashSphereConfig) -> np.ndarray:
    check_tables(params, cfg.table_rows(), cfg.features)
    return gather(lookup(dirs, cfg), params)


def encode(d, params, cfg: HashSphereConfig) -> np.ndarray:
    return encode_batch(np.reshape(d, (1, 3)), params, cfg)[0]


def encode_backward(d, upstream, params, cfg: HashSphereConfig) -> GradientBuffer:
    """Sparse table gradient of ``dot(upstream, encode(d))``.

    Directions receive no gradient; only table rows do.
    """
    check_tables(params, cfg.table_rows(), cfg.features)
    up = np.asarray(upstream, dtype=np.float64).reshape(1, -1)
    if up.shape[1] != cfg.output_width:
        raise ShapeError(f"upstream has {up.shape[1]} entries, expected {cfg.output_width}")
    return scatter_sparse(lookup(np.reshape(d, (1, 3)), cfg), up, cfg.features)


def encode_backward_batch(dirs, upstream, params, cfg: HashSphereConfig) -> list[np.ndarray]:
    """Dense per-level gradients summed over a batch."""
    check_tables(params, cfg.table_rows(), cfg.features)
    return scatter(lookup(dirs, cfg), upstream, cfg.table_rows(), cfg.features)
