"""Shared gather/scatter over per-level parameter tables.

Every encoding reduces, per level, to a set of ``k`` table rows with
interpolation weights for each sample. :class:`LevelLookup` holds those
and the functions here turn them into features (forward) or table
gradients (backward). Keeping one code path for all encodings keeps the
forward and backward passes consistent with each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LevelLookup:
    rows: np.ndarray  # (n, k) int64
    weights: np.ndarray  # (n, k) float64


@dataclass
class GradientBuffer:
    """Sparse per-level gradients: sorted unique rows and their summed F-vectors."""

    levels: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def touched_rows(self) -> int:
        return sum(len(rows) for rows, _ in self.levels)

    def to_dense(self, shapes) -> list[np.ndarray]:
        out = []
        for (rows, grads), shape in zip(self.levels, shapes):
            g = np.zeros(shape, dtype=np.float64)
            g[rows] = grads
            out.append(g)
        return out


class ShapeError(ValueError):
    """Parameter tables or gradients do not match the encoding config."""


def check_tables(params, row_counts, features: int) -> None:
    if len(params) != len(row_counts):
        raise ShapeError(f"expected {len(row_counts)} level tables, got {len(params)}")
    for level, (table, rows) in enumerate(zip(params, row_counts)):
        if table.shape != (rows, features):
            raise ShapeError(
                f"level {level} table has shape {table.shape}, expected {(rows, features)}"
            )


def gather(lookups: list[LevelLookup], params) -> np.ndarray:
    """Concatenated interpolated features, shape ``(n, L * F)``, level 0 first."""
    n = lookups[0].rows.shape[0]
    features = params[0].shape[1]
    dtype = params[0].dtype
    out = np.empty((n, len(lookups) * features), dtype=dtype)
    for level, (lk, table) in enumerate(zip(lookups, params)):
        vals = table[lk.rows]  # (n, k, F)
        # Sum corners in a fixed order so results do not depend on batch size.
        acc = lk.weights[:, 0, None] * vals[:, 0, :]
        for j in range(1, lk.rows.shape[1]):
            acc = acc + lk.weights[:, j, None] * vals[:, j, :]
        out[:, level * features : (level + 1) * features] = acc
    return out


def scatter(lookups: list[LevelLookup], upstream: np.ndarray, row_counts, features: int) -> list[np.ndarray]:
    """Dense float64 table gradients from an ``(n, L * F)`` upstream gradient.

    Contributions landing on the same row (shared vertices or hash
    collisions) are summed.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    grads = []
    for level, (lk, rows) in enumerate(zip(lookups, row_counts)):
        up = upstream[:, level * features : (level + 1) * features]
        flat_rows = lk.rows.ravel()
        g = np.empty((rows, features), dtype=np.float64)
        for f in range(features):
            contrib = (lk.weights * up[:, f, None]).ravel()
            g[:, f] = np.bincount(flat_rows, weights=contrib, minlength=rows)
        grads.append(g)
    return grads


def scatter_sparse(lookups: list[LevelLookup], upstream: np.ndarray, features: int) -> GradientBuffer:
    upstream = np.asarray(upstream, dtype=np.float64)
    buf = GradientBuffer()
    for level, lk in enumerate(lookups):
        up = upstream[:, level * features : (level + 1) * features]
        weights = lk.weights[:, :, None] * up[:, None, :]  # (n, k, F)
        nz = np.any(weights != 0.0, axis=-1)
        rows = lk.rows[nz]
        contrib = weights[nz]
        uniq, inv = np.unique(rows, return_inverse=True)
        g = np.zeros((len(uniq), features), dtype=np.float64)
        for f in range(features):
            g[:, f] = np.bincount(inv, weights=contrib[:, f], minlength=len(uniq))
        buf.levels.append((uniq, g))
    return buf


def multilinear_corners(p: np.ndarray, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Corners and weights of the grid cell containing each point.

    ``p`` is ``(n, k)`` in the unit hypercube (clamped); the lattice has
    ``resolution + 1`` corners per axis. Corner ``j`` uses offset bit ``i``
    of ``j`` along axis ``i``. Returns ``(n, 2**k, k)`` int64 corners and
    ``(n, 2**k)`` weights.
    """
    p = np.clip(np.asarray(p, dtype=np.float64), 0.0, 1.0)
    k = p.shape[-1]
    scaled = p * resolution
    base = np.minimum(np.floor(scaled), resolution - 1).astype(np.int64)
    frac = scaled - base
    offsets = (np.arange(2**k)[:, None] >> np.arange(k)[None, :]) & 1  # (2^k, k)
    corners = base[:, None, :] + offsets[None, :, :]
    w_axis = np.where(offsets[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :])
    weights = w_axis[..., 0]
    for i in range(1, k):
        weights = weights * w_axis[..., i]
    return corners, weights
