"""Slow, independent reference implementations used by the tests.

Nothing here reuses the traversal, hashing or interpolation code of the
package: meshes are built by naive recursive subdivision, containing faces
are found by exhaustive search, hashes use Python integers and barycentric
weights come from solving a 3x3 linear system. The only shared input is
the package's dense vertex table, used to canonicalise coordinates.
"""

from __future__ import annotations

import functools
import math

import numpy as np

PHI = (1.0 + math.sqrt(5.0)) / 2.0


def icosahedron():
    """Vertices (lexicographically sorted) and outward faces, rebuilt from scratch."""
    raw = []
    for a in (-1.0, 1.0):
        for b in (-PHI, PHI):
            raw += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    verts = sorted(tuple(c / math.sqrt(1 + PHI * PHI) for c in v) for v in raw)
    verts = np.array(verts)
    edge = min(np.linalg.norm(verts[0] - verts[j]) for j in range(1, 12))
    faces = []
    for i in range(12):
        for j in range(i + 1, 12):
            for k in range(j + 1, 12):
                if all(abs(np.linalg.norm(verts[a] - verts[b]) - edge) < 1e-9 for a, b in ((i, j), (j, k), (i, k))):
                    tri = [i, j, k]
                    n = np.cross(verts[j] - verts[i], verts[k] - verts[i])
                    if n @ verts[i] < 0:
                        tri = [i, k, j]
                    faces.append(tri)
    return verts, faces


def _unit(v):
    return v / np.linalg.norm(v)


@functools.lru_cache(maxsize=None)
def face_mesh(level: int) -> np.ndarray:
    """``(20 * 4**level, 3, 3)`` triangle corners, ordered by face id."""
    verts, faces = icosahedron()
    tris = [verts[f] for f in faces]
    for _ in range(level):
        nxt = []
        for v1, v2, v3 in tris:
            m12, m23, m31 = _unit(v1 + v2), _unit(v2 + v3), _unit(v3 + v1)
            nxt += [(v1, m12, m31), (v2, m23, m12), (v3, m31, m23), (m12, m23, m31)]
        tris = nxt
    return np.array(tris, dtype=np.float64)


def dedupe_vertices(level: int, decimals: int = 9) -> int:
    """Number of distinct vertex positions in the level mesh."""
    pts = face_mesh(level).reshape(-1, 3)
    return len({tuple(p) for p in np.round(pts, decimals) + 0.0})


def containing_faces(d: np.ndarray, level: int, chunk: int = 256) -> np.ndarray:
    """Index of a face whose spherical triangle contains each direction."""
    tris = face_mesh(level)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    n_ab, n_bc, n_ca = np.cross(a, b), np.cross(b, c), np.cross(c, a)
    out = np.empty(len(d), dtype=np.int64)
    for s in range(0, len(d), chunk):
        dd = d[s : s + chunk]
        m = np.minimum(np.minimum(dd @ n_ab.T, dd @ n_bc.T), dd @ n_ca.T)
        out[s : s + chunk] = np.argmax(m, axis=1)
    return out


def ray_barycentric(tri: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Weights of the ray-plane hit point, via ``solve(V^T, d)`` normalised to sum 1."""
    lam = np.linalg.solve(np.transpose(tri, (0, 2, 1)), d[..., None])[..., 0]
    return lam / lam.sum(axis=1, keepdims=True)


def py_discretize(x: float, gamma: int = 2**20) -> int:
    return int(math.floor((1.0 + min(1.0, max(-1.0, float(x)))) * gamma))


def py_xor_hash(coords, primes) -> int:
    h = 0
    for c, p in zip(coords, primes):
        h ^= (int(c) * int(p)) & 0xFFFFFFFF
    return h


def py_sphere_hash(v, primes=(1, 2654435761, 805459861), gamma=2**20) -> int:
    return py_xor_hash([py_discretize(x, gamma) for x in v], primes)


def py_joint_hash(corner, v, sp=(1, 2654435761, 805459861), dp=(3674653429, 2097192037, 1434869437), gamma=2**20) -> int:
    return py_xor_hash(corner, sp) ^ py_xor_hash([py_discretize(x, gamma) for x in v], dp)


def nearest_index(points: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Row of ``table`` nearest to each point (exact matches expected)."""
    out = np.empty(len(points), dtype=np.int64)
    sq = np.sum(table * table, axis=1)
    for s in range(0, len(points), 1024):
        p = points[s : s + 1024]
        out[s : s + 1024] = np.argmin(sq[None, :] - 2.0 * p @ table.T, axis=1)
    return out


def vertex_count(level: int) -> int:
    return 10 * 4**level + 2


def sphere_encode_reference(d: np.ndarray, tables, table_cap: int, positions: np.ndarray) -> np.ndarray:
    """Hash-sphere features by exhaustive face search and Python-int hashing.

    ``positions`` is the dense vertex table. It maps vertex positions to
    unique indices on dense levels and supplies the canonical coordinates
    that get hashed: some grid coordinates are exact dyadic values such as
    0.5, where a one-ulp difference flips ``floor((1 + v) * gamma)``.
    """
    n, feats = len(d), tables[0].shape[1]
    out = np.zeros((n, len(tables) * feats))
    for level, table in enumerate(tables):
        tris = face_mesh(level)[containing_faces(d, level)]
        bary = ray_barycentric(tris, d)
        dense = vertex_count(level) <= table_cap
        for j in range(3):
            idx = nearest_index(tris[:, j], positions[: vertex_count(level)])
            if dense:
                rows = idx
            else:
                rows = np.array([py_sphere_hash(v) % table_cap for v in positions[idx]])
            out[:, level * feats : (level + 1) * feats] += bary[:, j, None] * table[rows]
    return out


def trilinear_reference(p: np.ndarray, resolution: int):
    """Yields ``(corner (n, k) int, weight (n,))`` for each of the 2**k cell corners."""
    k = p.shape[1]
    scaled = np.clip(p, 0.0, 1.0) * resolution
    base = np.minimum(np.floor(scaled), resolution - 1)
    frac = scaled - base
    for bits in range(2**k):
        offs = np.array([(bits >> i) & 1 for i in range(k)])
        w = np.ones(len(p))
        for i in range(k):
            w *= frac[:, i] if offs[i] else 1.0 - frac[:, i]
        yield (base + offs).astype(np.int64), w


def grid_encode_reference(p: np.ndarray, tables, base_res: int, scale: float, table_cap: int,
                          primes=(1, 2654435761, 805459861)) -> np.ndarray:
    n, k = p.shape
    feats = tables[0].shape[1]
    out = np.zeros((n, len(tables) * feats))
    for level, table in enumerate(tables):
        res = int(math.floor(base_res * scale**level))
        dense = (res + 1) ** k <= table_cap
        for corner, w in trilinear_reference(p, res):
            if dense:
                rows = sum(corner[:, i] * (res + 1) ** i for i in range(k))
            else:
                rows = np.array([py_xor_hash(c, primes) % table_cap for c in corner])
            out[:, level * feats : (level + 1) * feats] += w[:, None] * table[rows]
    return out


def joint_encode_reference(x: np.ndarray, d: np.ndarray, tables, base_res: int, scale: float,
                           dir_cap: int, table_cap: int, positions: np.ndarray) -> np.ndarray:
    """All 24 (corner, vertex) pairs enumerated explicitly.

    Vertex coordinates are canonicalised through ``positions`` as in
    :func:`sphere_encode_reference`.
    """
    n = len(d)
    feats = tables[0].shape[1]
    out = np.zeros((n, len(tables) * feats))
    for level, table in enumerate(tables):
        res = int(math.floor(base_res * scale**level))
        m = min(level // 2, dir_cap)
        tris = face_mesh(m)[containing_faces(d, m)]
        bary = ray_barycentric(tris, d)
        nv = vertex_count(m)
        dense = (res + 1) ** 3 * nv <= table_cap
        vidx = [nearest_index(tris[:, j], positions[:nv]) for j in range(3)]
        for corner, w in trilinear_reference(x, res):
            lin = (corner[:, 2] * (res + 1) + corner[:, 1]) * (res + 1) + corner[:, 0]
            for j in range(3):
                idx = vidx[j]
                if dense:
                    rows = lin * nv + idx
                else:
                    rows = np.array([py_joint_hash(c, v) % table_cap for c, v in zip(corner, positions[idx])])
                out[:, level * feats : (level + 1) * feats] += (w * bary[:, j])[:, None] * table[rows]
    return out
