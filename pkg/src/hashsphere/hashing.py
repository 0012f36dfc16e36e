"""Coordinate discretization, XOR-prime hashes and hybrid dense/hashed indexing.

All products are taken modulo 2**32 (unsigned wrap-around) before the XOR,
so results do not depend on platform integer width. Arrays of any shape are
accepted; the trailing axis holds the 3 coordinates.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .geodesic import vertex_count

MASK32 = np.uint64(0xFFFFFFFF)

SPHERE_PRIMES = (1, 2654435761, 805459861)
JOINT_SPATIAL_PRIMES = (1, 2654435761, 805459861)
JOINT_DIR_PRIMES = (3674653429, 2097192037, 1434869437)
DEFAULT_GAMMA = 2**20


class ConfigError(ValueError):
    """Invalid encoding or hashing configuration."""


@dataclass(frozen=True)
class HashConfig:
    gamma: int = DEFAULT_GAMMA
    primes_sphere: tuple[int, int, int] = SPHERE_PRIMES
    primes_joint_spatial: tuple[int, int, int] = JOINT_SPATIAL_PRIMES
    primes_joint_dir: tuple[int, int, int] = JOINT_DIR_PRIMES
    table_cap: int = 2**14

    def __post_init__(self):
        object.__setattr__(self, "primes_sphere", tuple(int(p) for p in self.primes_sphere))
        object.__setattr__(self, "primes_joint_spatial", tuple(int(p) for p in self.primes_joint_spatial))
        object.__setattr__(self, "primes_joint_dir", tuple(int(p) for p in self.primes_joint_dir))
        if self.gamma < 2**16:
            raise ConfigError("gamma must be at least 2**16")
        if 2 * self.gamma >= 2**32:
            raise ConfigError("gamma too large for 32-bit discretized coordinates")
        if self.table_cap < 1 or self.table_cap & (self.table_cap - 1):
            raise ConfigError("table_cap must be a power of two")
        for name in ("primes_sphere", "primes_joint_spatial", "primes_joint_dir"):
            primes = getattr(self, name)
            if len(primes) != 3 or any(not 0 < p < 2**32 for p in primes):
                raise ConfigError(f"{name} must hold three integers in (0, 2**32)")
        if len(set(self.primes_sphere)) != 3:
            raise ConfigError("sphere primes must be distinct")
        if len(set(self.primes_joint_spatial + self.primes_joint_dir)) != 6:
            raise ConfigError("the six joint primes must be pairwise distinct")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "HashConfig":
        return cls(**data)


def discretize(v, gamma: int = DEFAULT_GAMMA) -> np.ndarray:
    """``floor((1 + v) * gamma)`` with ``v`` clamped to [-1, 1], as uint64."""
    v = np.clip(np.asarray(v, dtype=np.float64), -1.0, 1.0)
    return np.floor((1.0 + v) * gamma).astype(np.uint64)


def _xor_products(coords: np.ndarray, primes) -> np.ndarray:
    coords = coords.astype(np.uint64)
    out = np.zeros(coords.shape[:-1], dtype=np.uint64)
    for i, p in enumerate(primes):
        out ^= (coords[..., i] * np.uint64(p)) & MASK32
    return out


def hash_sphere(v, cfg: HashConfig) -> np.ndarray:
    return _xor_products(discretize(v, cfg.gamma), cfg.primes_sphere)


def hash_joint(c, v, cfg: HashConfig) -> np.ndarray:
    spatial = _xor_products(np.asarray(c, dtype=np.int64), cfg.primes_joint_spatial)
    return spatial ^ _xor_products(discretize(v, cfg.gamma), cfg.primes_joint_dir)


def sphere_rows(level: int, cfg: HashConfig) -> int:
    return min(cfg.table_cap, vertex_count(level))


def joint_grid_size(resolution: int, dir_level: int) -> int:
    return (resolution + 1) ** 3 * vertex_count(dir_level)


def phi_sphere(level: int, vertex_dense_index, v, cfg: HashConfig) -> np.ndarray:
    """Table row of a level-``level`` vertex (dense index if the level fits)."""
    nv = vertex_count(level)
    if nv <= cfg.table_cap:
        idx = np.asarray(vertex_dense_index, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= nv):
            raise IndexError(f"dense vertex index out of range for level {level}")
        return idx
    return (hash_sphere(v, cfg) % np.uint64(cfg.table_cap)).astype(np.int64)


def corner_linear_index(corner, resolution: int) -> np.ndarray:
    """Row-major index over (z, y, x) of the ``(resolution + 1)**3`` corner lattice."""
    c = np.asarray(corner, dtype=np.int64)
    side = resolution + 1
    return (c[..., 2] * side + c[..., 1]) * side + c[..., 0]


def phi_joint(dir_level: int, corner, vertex_dense_index, v, resolution: int, cfg: HashConfig) -> np.ndarray:
    """Table row of a (voxel corner, directional vertex) pair.

    ``resolution`` is the spatial grid resolution N of the level; the grid
    size is ``(N + 1)**3 * |V_dir_level|``.
    """
    nv = vertex_count(dir_level)
    size = joint_grid_size(resolution, dir_level)
    if size <= cfg.table_cap:
        idx = np.asarray(vertex_dense_index, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= nv):
            raise IndexError(f"dense vertex index out of range for level {dir_level}")
        c = np.asarray(corner, dtype=np.int64)
        if c.size and (c.min() < 0 or c.max() > resolution):
            raise IndexError("corner outside the lattice")
        return corner_linear_index(c, resolution) * nv + idx
    return (hash_joint(corner, v, cfg) % np.uint64(cfg.table_cap)).astype(np.int64)
