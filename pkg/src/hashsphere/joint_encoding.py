"""Hash-grid-sphere: joint encoding of (position, direction) pairs.

Level ``l`` pairs a spatial voxel grid of resolution ``N_l`` with the
geodesic grid at directional depth ``m(l) = min(l // 2, L_d)``. The 8 voxel
corners and 3 triangle vertices form 24 (corner, vertex) pairs whose rows
are blended with the product of trilinear and barycentric weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geodesic
from .geodesic import build_dense_tables, vertex_count
from .hashing import ConfigError, HashConfig, corner_linear_index, hash_joint, joint_grid_size
from .interp import GradientBuffer, LevelLookup, ShapeError, check_tables, gather, multilinear_corners, scatter, scatter_sparse
from .sphere_encoding import INIT_RANGE


def _joint_hash_default() -> HashConfig:
    return HashConfig(table_cap=2**16)


@dataclass(frozen=True)
class JointConfig:
    levels: int = 8
    base_resolution: int = 16
    per_level_scale: float = 2.0
    dir_level_cap: int = 4
    features: int = 2
    hash: HashConfig = field(default_factory=_joint_hash_default)
    bounds_min: tuple[float, float, float] = (0.0, 0.0, 0.0)
    bounds_max: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "bounds_min", tuple(float(v) for v in self.bounds_min))
        object.__setattr__(self, "bounds_max", tuple(float(v) for v in self.bounds_max))
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.base_resolution < 1 or self.per_level_scale <= 1.0:
            raise ConfigError("need base_resolution >= 1 and per_level_scale > 1")
        if self.dir_level_cap < 0:
            raise ConfigError("dir_level_cap must be non-negative")
        if self.features not in (1, 2, 4, 8):
            raise ConfigError("features per level must be 1, 2, 4 or 8")
        if any(hi <= lo for lo, hi in zip(self.bounds_min, self.bounds_max)):
            raise ConfigError("bounds_max must exceed bounds_min on every axis")
        res = [self.resolution(lvl) for lvl in range(self.levels)]
        if self.per_level_scale >= 2.0 and any(b <= a for a, b in zip(res, res[1:])):
            raise ConfigError("spatial resolutions must strictly increase")
        if self.dense_dir_level > geodesic.MAX_DENSE_LEVEL:
            raise ConfigError("dense joint levels need geodesic tables beyond level 8")

    @property
    def table_cap(self) -> int:
        return self.hash.table_cap

    def resolution(self, level: int) -> int:
        return int(math.floor(self.base_resolution * self.per_level_scale**level))

    def dir_level(self, level: int) -> int:
        return min(level // 2, self.dir_level_cap)

    def grid_size(self, level: int) -> int:
        return joint_grid_size(self.resolution(level), self.dir_level(level))

    def is_dense(self, level: int) -> bool:
        return self.grid_size(level) <= self.table_cap

    @property
    def dense_dir_level(self) -> int:
        dense = [self.dir_level(lvl) for lvl in range(self.levels) if self.is_dense(lvl)]
        return max(dense) if dense else -1

    def table_rows(self) -> list[int]:
        return [min(self.table_cap, self.grid_size(lvl)) for lvl in range(self.levels)]

    @property
    def output_width(self) -> int:
        return self.levels * self.features

    def to_unit_cube(self, x) -> np.ndarray:
        lo = np.asarray(self.bounds_min)
        hi = np.asarray(self.bounds_max)
        return np.clip((np.asarray(x, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)


def directional_level(level: int, cfg: JointConfig) -> int:
    return cfg.dir_level(level)


def trilinear_corners(x, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """``(n, 8, 3)`` corners in ``[0, N]^3`` and ``(n, 8)`` trilinear weights."""
    return multilinear_corners(np.reshape(x, (-1, 3)), resolution)


def init_params(cfg: JointConfig, seed: int, dtype=np.float32) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [
        rng.uniform(-INIT_RANGE, INIT_RANGE, size=(rows, cfg.features)).astype(dtype)
        for rows in cfg.table_rows()
    ]


def lookup(x, d, cfg: JointConfig) -> list[LevelLookup]:
    """Per-level rows/weights of the 24 (corner, vertex) pairs, corner-major."""
    p = cfg.to_unit_cube(np.reshape(x, (-1, 3)))
    d = geodesic.as_directions(d).reshape(-1, 3)
    if len(p) != len(d):
        raise ShapeError("positions and directions must have the same length")
    n = len(d)
    tables = build_dense_tables(cfg.dense_dir_level) if cfg.dense_dir_level >= 0 else None
    cap = np.uint64(cfg.table_cap)

    # The directional triangle only refines when m(l) increases.
    dir_states = list(geodesic.traverse(d, cfg.dir_level(cfg.levels - 1) + 1))
    out = []
    for level in range(cfg.levels):
        m = cfg.dir_level(level)
        _, face, tri, bary = dir_states[m]
        res = cfg.resolution(level)
        corners, w = trilinear_corners(p, res)
        if cfg.is_dense(level):
            vidx = tables.faces[m][face]  # (n, 3)
            lin = corner_linear_index(corners, res)  # (n, 8)
            rows = lin[:, :, None] * vertex_count(m) + vidx[:, None, :]
        else:
            c = np.broadcast_to(corners[:, :, None, :], (n, 8, 3, 3))
            v = np.broadcast_to(tri[:, None, :, :], (n, 8, 3, 3))
            rows = (hash_joint(c, v, cfg.hash) % cap).astype(np.int64)
        weights = w[:, :, None] * bary[:, None, :]
        out.append(LevelLookup(rows.reshape(n, 24), weights.reshape(n, 24)))
    return out


def encode_joint_batch(x, d, params, cfg: JointConfig) -> np.ndarray:
    check_tables(params, cfg.table_rows(), cfg.features)
    return gather(lookup(x, d, cfg), params)


def encode_joint(x, d, params, cfg: JointConfig) -> np.ndarray:
    return encode_joint_batch(np.reshape(x, (1, 3)), np.reshape(d, (1, 3)), params, cfg)[0]


def encode_joint_backward(x, d, upstream, params, cfg: JointConfig) -> GradientBuffer:
    check_tables(params, cfg.table_rows(), cfg.features)
    up = np.asarray(upstream, dtype=np.float64).reshape(1, -1)
    if up.shape[1] != cfg.output_width:
        raise ShapeError(f"upstream has {up.shape[1]} entries, expected {cfg.output_width}")
    lk = lookup(np.reshape(x, (1, 3)), np.reshape(d, (1, 3)), cfg)
    return scatter_sparse(lk, up, cfg.features)


def encode_joint_backward_batch(x, d, upstream, params, cfg: JointConfig) -> list[np.ndarray]:
    check_tables(params, cfg.table_rows(), cfg.features)
    return scatter(lookup(x, d, cfg), upstream, cfg.table_rows(), cfg.features)
