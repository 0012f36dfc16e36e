"""Multiresolution hash grids over the unit square/cube, used as baselines.

Directions reach the grid either through the polar (longitude, colatitude)
map onto [0, 1]^2 or through the Cartesian map ``(d + 1) / 2`` onto
[0, 1]^3. The polar grid is deliberately left unstitched at the longitude
seam and degenerate at the poles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import geodesic
from .hashing import MASK32, ConfigError
from .interp import LevelLookup, check_tables, gather, multilinear_corners, scatter
from .sphere_encoding import INIT_RANGE

GRID_PRIMES = (1, 2654435761, 805459861)


@dataclass(frozen=True)
class GridEncodingConfig:
    dims: int = 2
    base_resolution: int = 8
    per_level_scale: float = 2.0
    levels: int = 8
    table_cap: int = 2**14
    features: int = 2
    primes: tuple[int, ...] = GRID_PRIMES

    def __post_init__(self):
        object.__setattr__(self, "primes", tuple(int(p) for p in self.primes))
        if self.dims not in (2, 3):
            raise ConfigError("grid dimensionality must be 2 or 3")
        if len(self.primes) < self.dims:
            raise ConfigError("need one hash prime per dimension")
        if self.levels < 1 or self.table_cap < 1 or self.base_resolution < 1:
            raise ConfigError("levels, table_cap and base_resolution must be positive")
        if self.per_level_scale <= 1.0:
            raise ConfigError("per_level_scale must exceed 1")
        if self.features < 1:
            raise ConfigError("features must be positive")

    def resolution(self, level: int) -> int:
        return int(math.floor(self.base_resolution * self.per_level_scale**level))

    def grid_size(self, level: int) -> int:
        return (self.resolution(level) + 1) ** self.dims

    def is_dense(self, level: int) -> bool:
        return self.grid_size(level) <= self.table_cap

    def table_rows(self) -> list[int]:
        return [min(self.table_cap, self.grid_size(lvl)) for lvl in range(self.levels)]

    @property
    def output_width(self) -> int:
        return self.levels * self.features


def polar_map(d) -> np.ndarray:
    """``(u, v)``: longitude ``(atan2(y, x) + pi) / 2pi`` and colatitude ``/ pi``."""
    d = geodesic.as_directions(d)
    u = (np.arctan2(d[..., 1], d[..., 0]) + np.pi) / (2.0 * np.pi)
    v = np.arccos(np.clip(d[..., 2], -1.0, 1.0)) / np.pi
    return np.stack([u, v], axis=-1)


def polar_unmap(uv) -> np.ndarray:
    uv = np.asarray(uv, dtype=np.float64)
    phi = uv[..., 0] * 2.0 * np.pi - np.pi
    theta = uv[..., 1] * np.pi
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def cartesian_map(d) -> np.ndarray:
    return (geodesic.as_directions(d) + 1.0) / 2.0


def init_params(cfg: GridEncodingConfig, seed: int, dtype=np.float32) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [
        rng.uniform(-INIT_RANGE, INIT_RANGE, size=(rows, cfg.features)).astype(dtype)
        for rows in cfg.table_rows()
    ]


def grid_rows(corners: np.ndarray, level: int, cfg: GridEncodingConfig) -> np.ndarray:
    """Dense row-major (axis 0 fastest) index or XOR-prime hash mod T."""
    if cfg.is_dense(level):
        side = cfg.resolution(level) + 1
        idx = np.zeros(corners.shape[:-1], dtype=np.int64)
        for i in reversed(range(cfg.dims)):
            idx = idx * side + corners[..., i]
        return idx
    c = corners.astype(np.uint64)
    h = np.zeros(corners.shape[:-1], dtype=np.uint64)
    for i in range(cfg.dims):
        h ^= (c[..., i] * np.uint64(cfg.primes[i])) & MASK32
    return (h % np.uint64(cfg.table_cap)).astype(np.int64)


def lookup(p, cfg: GridEncodingConfig) -> list[LevelLookup]:
    p = np.reshape(np.asarray(p, dtype=np.float64), (-1, cfg.dims))
    out = []
    for level in range(cfg.levels):
        corners, w = multilinear_corners(p, cfg.resolution(level))
        out.append(LevelLookup(grid_rows(corners, level, cfg), w))
    return out


def encode_grid_batch(p, params, cfg: GridEncodingConfig) -> np.ndarray:
    check_tables(params, cfg.table_rows(), cfg.features)
    return gather(lookup(p, cfg), params)


def encode_grid(p, params, cfg: GridEncodingConfig) -> np.ndarray:
    return encode_grid_batch(np.reshape(p, (1, cfg.dims)), params, cfg)[0]


def encode_grid_backward_batch(p, upstream, params, cfg: GridEncodingConfig) -> list[np.ndarray]:
    check_tables(params, cfg.table_rows(), cfg.features)
    return scatter(lookup(p, cfg), upstream, cfg.table_rows(), cfg.features)


def match_table_cap(cfg: GridEncodingConfig, target_rows: int) -> GridEncodingConfig:
    """Same grid with the table cap chosen so total rows best match ``target_rows``.

    Used to compare encodings at equal memory; the returned cap need not be
    a power of two.
    """
    best_cap, best_gap = cfg.table_cap, None
    lo, hi = 1, max(cfg.grid_size(lvl) for lvl in range(cfg.levels))
    # Total rows are non-decreasing in T, so bisect for the crossing point.
    while lo < hi:
        mid = (lo + hi) // 2
        if sum(min(mid, cfg.grid_size(lvl)) for lvl in range(cfg.levels)) < target_rows:
            lo = mid + 1
        else:
            hi = mid
    for cap in (lo - 1, lo):
        if cap < 1:
            continue
        gap = abs(sum(min(cap, cfg.grid_size(lvl)) for lvl in range(cfg.levels)) - target_rows)
        if best_gap is None or gap < best_gap:
            best_cap, best_gap = cap, gap
    return replace(cfg, table_cap=best_cap)
