"""Recursively subdivided icosahedron and per-direction traversal.

The sphere is tessellated by the 20 faces of a regular icosahedron; each
level splits every triangle into four by reprojecting the edge midpoints
onto the unit sphere. A direction is located on the base icosahedron with
edge-plane sign tests and then refined level by level.

Barycentric weights are *planar*: they come from intersecting the ray
along ``d`` with the chord triangle (Moller-Trumbore), not from spherical
areas. At coarse levels this differs slightly from area coordinates but
still reproduces ``d`` exactly after normalization.

All geometry is float64. Batch functions take ``(n, 3)`` direction arrays
and triangles as ``(n, 3, 3)`` arrays with vertices along axis 1.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

CONTAINMENT_EPS = 1e-9
# Fallback slack when no candidate passes the strict test (float noise on edges).
RELAXED_EPS = 1e-7
RENORMALIZE_TOL = 1e-3
MAX_DENSE_LEVEL = 8

# Children of a triangle expressed over [v1, v2, v3, m12, m23, m31].
# Child k < 3 is the corner triangle of parent vertex k+1 (listed first);
# child 3 is the central triangle. All keep the parent's winding.
CHILD_CORNERS = np.array(
    [[0, 3, 5], [1, 4, 3], [2, 5, 4], [3, 4, 5]], dtype=np.intp
)


class GeometryError(RuntimeError):
    """Traversal reached a state that violates containment."""


class DirectionError(ValueError):
    """Input direction is too far from unit length to renormalize."""


@dataclass(frozen=True)
class GeodesicTriangle:
    level: int
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    face_path: tuple[int, ...]

    @property
    def vertices(self) -> np.ndarray:
        return np.stack([self.v1, self.v2, self.v3])

    @property
    def face_id(self) -> int:
        """Face index in the dense level-``level`` enumeration."""
        fid = self.face_path[0]
        for digit in self.face_path[1:]:
            fid = fid * 4 + digit
        return fid


@dataclass(frozen=True)
class IcosahedronBase:
    vertices: np.ndarray  # (12, 3)
    faces: np.ndarray  # (20, 3), outward winding

    def edges(self) -> set[tuple[int, int]]:
        out = set()
        for a, b, c in self.faces.tolist():
            for i, j in ((a, b), (b, c), (c, a)):
                out.add((min(i, j), max(i, j)))
        return out


@dataclass(frozen=True)
class DenseVertexTables:
    """Face -> vertex index tables for levels ``0..max_level``.

    ``faces[l][f]`` lists the unique vertex indices of face ``f`` at level
    ``l`` in the same order the traversal produces its triangle vertices.
    Vertex indices are nested: level ``l`` keeps every index of level
    ``l - 1`` and appends its new midpoints.
    """

    faces: tuple[np.ndarray, ...]
    positions: np.ndarray  # positions of the finest level's vertices
    vertex_counts: tuple[int, ...]

    @property
    def max_level(self) -> int:
        return len(self.faces) - 1


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.sqrt(v[..., 0] * v[..., 0] + v[..., 1] * v[..., 1] + v[..., 2] * v[..., 2])
    return v / n[..., None]


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def as_directions(d) -> np.ndarray:
    """Validate directions, renormalizing those within ``RENORMALIZE_TOL``.

    Accepts a single ``(3,)`` vector or an ``(n, 3)`` batch and returns a
    float64 array of the same shape.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.shape[-1] != 3:
        raise DirectionError(f"directions must have 3 components, got shape {d.shape}")
    norm = np.sqrt(dot(d, d))
    if not np.all(np.isfinite(norm)) or np.any(np.abs(norm - 1.0) > RENORMALIZE_TOL):
        raise DirectionError("direction norm deviates from 1 by more than 1e-3")
    if np.all(norm == 1.0):
        return d
    return d / norm[..., None]


def vertex_count(level: int) -> int:
    if level < 0:
        raise ValueError("level must be non-negative")
    return 10 * 4**level + 2


def face_count(level: int) -> int:
    return 20 * 4**level


@functools.lru_cache(maxsize=1)
def base_icosahedron() -> IcosahedronBase:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    raw = []
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            raw.append((0.0, s1, s2 * phi))
            raw.append((s1, s2 * phi, 0.0))
            raw.append((s2 * phi, 0.0, s1))
    verts = normalize(np.array(raw))
    order = np.lexsort((verts[:, 2], verts[:, 1], verts[:, 0]))
    verts = verts[order]

    dist = np.linalg.norm(verts[:, None, :] - verts[None, :, :], axis=-1)
    edge = dist[dist > 1e-9].min()
    adjacent = np.abs(dist - edge) < 1e-9
    faces = []
    for i in range(12):
        for j in range(i + 1, 12):
            if not adjacent[i, j]:
                continue
            for k in range(j + 1, 12):
                if adjacent[i, k] and adjacent[j, k]:
                    a, b, c = verts[i], verts[j], verts[k]
                    if dot(cross(b - a, c - a), a + b + c) < 0:
                        faces.append((i, k, j))
                    else:
                        faces.append((i, j, k))
    verts.setflags(write=False)
    faces_arr = np.array(faces, dtype=np.int64)
    faces_arr.setflags(write=False)
    return IcosahedronBase(vertices=verts, faces=faces_arr)


@functools.lru_cache(maxsize=1)
def _base_edge_normals() -> np.ndarray:
    ico = base_icosahedron()
    tri = ico.vertices[ico.faces]  # (20, 3, 3)
    return _edge_normals(tri)


def _edge_normals(tri: np.ndarray) -> np.ndarray:
    """Great-circle plane normals of each triangle edge, pointing inward."""
    return np.stack(
        [
            cross(tri[..., 0, :], tri[..., 1, :]),
            cross(tri[..., 1, :], tri[..., 2, :]),
            cross(tri[..., 2, :], tri[..., 0, :]),
        ],
        axis=-2,
    )


def contains(tri: np.ndarray, d: np.ndarray, eps: float = CONTAINMENT_EPS) -> np.ndarray:
    """Spherical point-in-triangle test; broadcasts over leading axes."""
    normals = _edge_normals(tri)
    return np.all(dot(normals, d[..., None, :]) >= -eps, axis=-1)


def _bary_cm(t: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Component-major core of :func:`barycentric`: ``t`` is (3 verts, 3, ...)."""
    v1, v2, v3 = t[0], t[1], t[2]
    e1 = v2 - v1
    e2 = v3 - v1
    p0 = d[1] * e2[2] - d[2] * e2[1]
    p1 = d[2] * e2[0] - d[0] * e2[2]
    p2 = d[0] * e2[1] - d[1] * e2[0]
    det = e1[0] * p0 + e1[1] * p1 + e1[2] * p2
    s = -v1
    u = (s[0] * p0 + s[1] * p1 + s[2] * p2) / det
    q0 = s[1] * e1[2] - s[2] * e1[1]
    q1 = s[2] * e1[0] - s[0] * e1[2]
    q2 = s[0] * e1[1] - s[1] * e1[0]
    v = (d[0] * q0 + d[1] * q1 + d[2] * q2) / det
    b = np.stack([1.0 - u - v, u, v], axis=-1)
    b = np.maximum(b, 0.0)
    return b / (b[..., 0] + b[..., 1] + b[..., 2])[..., None]


def barycentric(tri: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Moller-Trumbore weights of the ray ``t * d`` against the chord triangle.

    Weights are clamped to be non-negative and renormalized to sum to 1.
    ``tri`` is ``(..., 3, 3)`` and ``d`` is ``(..., 3)``.
    """
    tri = np.asarray(tri, dtype=np.float64)
    d = np.broadcast_to(np.asarray(d, dtype=np.float64), tri.shape[:-2] + (3,))
    t = np.moveaxis(tri, (-2, -1), (0, 1))
    return _bary_cm(t, np.moveaxis(d, -1, 0))


# Nearest-normal guesses are accepted only with this much interior margin.
_PREFILTER_MARGIN = 1e-6


@functools.lru_cache(maxsize=1)
def _base_face_normals() -> np.ndarray:
    ico = base_icosahedron()
    return np.ascontiguousarray(normalize(ico.vertices[ico.faces].sum(axis=1)))


def _base_margins(d: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Smallest edge-plane value of ``d`` against each listed base face."""
    nrm = _base_edge_normals()[faces]  # (..., 3 edges, 3)
    s = [dot(nrm[..., k, :], d) for k in range(3)]
    return np.minimum(np.minimum(s[0], s[1]), s[2])


def locate_base(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Base face id and triangle for each direction in an ``(n, 3)`` batch.

    The face with the nearest normal is accepted when ``d`` is clearly
    inside it. Everything else gets an exact pass over all 20 faces where
    the lowest containing face id wins, so points on shared edges and
    vertices resolve deterministically.
    """
    ico = base_icosahedron()
    face = np.argmax(d @ _base_face_normals().T, axis=1)
    unsure = _base_margins(d, face) <= _PREFILTER_MARGIN
    if unsure.any():
        du = d[unsure]
        margin = _base_margins(du[:, None, :], np.arange(20)[None, :])  # (m, 20)
        inside = margin >= -CONTAINMENT_EPS
        exact = np.argmax(inside, axis=1)
        missing = ~inside.any(axis=1)
        if missing.any():
            # Numerically outside everything: take the face it is least outside of.
            exact[missing] = np.argmax(margin[missing], axis=1)
        face[unsure] = exact
    face = face.astype(np.int64)
    return face, ico.vertices[ico.faces[face]]


def midpoints(tri: np.ndarray) -> np.ndarray:
    """``(.., 6, 3)`` array [v1, v2, v3, m12, m23, m31] with sphere-projected midpoints."""
    v1, v2, v3 = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
    return np.stack(
        [v1, v2, v3, normalize(v1 + v2), normalize(v2 + v3), normalize(v3 + v1)],
        axis=-2,
    )


def _triple_cm(a: np.ndarray, b: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``dot(cross(a, b), d)`` for component-major ``(3, n)`` operands."""
    c0 = a[1] * b[2] - a[2] * b[1]
    c1 = a[2] * b[0] - a[0] * b[2]
    c2 = a[0] * b[1] - a[1] * b[0]
    return c0 * d[0] + c1 * d[1] + c2 * d[2]


def _normalize_cm(v: np.ndarray) -> np.ndarray:
    return v / np.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def _midpoints_cm(t: np.ndarray) -> np.ndarray:
    """(6, 3, n) [v1, v2, v3, m12, m23, m31] from a (3, 3, n) triangle."""
    out = np.empty((6,) + t.shape[1:])
    out[:3] = t
    out[3] = _normalize_cm(t[0] + t[1])
    out[4] = _normalize_cm(t[1] + t[2])
    out[5] = _normalize_cm(t[2] + t[0])
    return out


def _child_tests(pts: np.ndarray, d: np.ndarray, eps: float) -> np.ndarray:
    """(n, 4) containment of ``d`` in each child; ``pts`` is (6, 3, n)."""
    v1, v2, v3, m12, m23, m31 = pts
    # Central child's edge planes are exact negations of the inner corner planes.
    a = _triple_cm(m12, m31, d)
    b = _triple_cm(m23, m12, d)
    c = _triple_cm(m31, m23, d)
    lo = -eps
    return np.stack(
        [
            (_triple_cm(v1, m12, d) >= lo) & (a >= lo) & (_triple_cm(m31, v1, d) >= lo),
            (_triple_cm(v2, m23, d) >= lo) & (b >= lo) & (_triple_cm(m12, v2, d) >= lo),
            (_triple_cm(v3, m31, d) >= lo) & (c >= lo) & (_triple_cm(m23, v3, d) >= lo),
            (-b >= lo) & (-c >= lo) & (-a >= lo),
        ],
        axis=1,
    )


def _refine_cm(t: np.ndarray, face: np.ndarray, d: np.ndarray):
    pts = _midpoints_cm(t)
    inside = _child_tests(pts, d, CONTAINMENT_EPS)
    child = np.argmax(inside, axis=1)
    missing = ~inside.any(axis=1)
    if missing.any():
        relaxed = _child_tests(pts[:, :, missing], d[:, missing], RELAXED_EPS)
        if not relaxed.any(axis=1).all():
            raise GeometryError("direction lies outside all four child triangles")
        child[missing] = np.argmax(relaxed, axis=1)
    corners = CHILD_CORNERS[child].T  # (3, n)
    cols = np.arange(d.shape[1])
    out = np.empty_like(t)
    for k in range(3):
        out[k] = pts[corners[k], :, cols].T
    return child, face * 4 + child, out


def refine(tri: np.ndarray, face: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Descend one level: returns (child_index, child_face_id, child_triangle).

    Children are tested in order 0..3 and the first container wins.
    """
    t = np.ascontiguousarray(np.transpose(tri, (1, 2, 0)))
    child, face, out = _refine_cm(t, face, np.ascontiguousarray(d.T))
    return child, face, np.transpose(out, (2, 0, 1))


def traverse(d: np.ndarray, levels: int):
    """Yield ``(level, face_id, triangle, barycentric)`` for levels ``0..levels-1``.

    Triangles are ``(n, 3, 3)`` views, barycentrics ``(n, 3)``.
    """
    face, tri = locate_base(d)
    t = np.ascontiguousarray(np.transpose(tri, (1, 2, 0)))
    dc = np.ascontiguousarray(d.T)
    for level in range(levels):
        if level > 0:
            _, face, t = _refine_cm(t, face, dc)
        yield level, face, np.transpose(t, (2, 0, 1)), _bary_cm(t, dc)


# -- single-direction API ---------------------------------------------------


def icosahedron_intersection(d) -> tuple[int, GeodesicTriangle, np.ndarray]:
    d = as_directions(d).reshape(1, 3)
    face, tri = locate_base(d)
    bary = barycentric(tri, d)[0]
    fid = int(face[0])
    t = GeodesicTriangle(0, tri[0, 0], tri[0, 1], tri[0, 2], (fid,))
    return fid, t, bary


def refine_triangle(tri: GeodesicTriangle, d) -> tuple[int, GeodesicTriangle, np.ndarray]:
    d = as_directions(d).reshape(1, 3)
    verts = tri.vertices[None]
    child, _, child_tri = refine(verts, np.array([tri.face_id]), d)
    k = int(child[0])
    bary = barycentric(child_tri, d)[0]
    c = child_tri[0]
    return k, GeodesicTriangle(tri.level + 1, c[0], c[1], c[2], tri.face_path + (k,)), bary


# -- dense tables -----------------------------------------------------------


@functools.lru_cache(maxsize=None)
def build_dense_tables(max_dense_level: int) -> DenseVertexTables:
    """Subdivide the icosahedron up to ``max_dense_level`` with edge dedupe.

    New vertices are appended in ascending order of their parent edge key,
    which makes the numbering deterministic and independent of platform.
    """
    if max_dense_level < 0:
        raise ValueError("max_dense_level must be non-negative")
    if max_dense_level > MAX_DENSE_LEVEL:
        raise ValueError(
            f"dense tables beyond level {MAX_DENSE_LEVEL} are not supported (got {max_dense_level})"
        )
    ico = base_icosahedron()
    pos = np.array(ico.vertices)
    faces = np.array(ico.faces)
    all_faces = [faces]
    counts = [len(pos)]
    for _ in range(max_dense_level):
        nv = len(pos)
        a = faces[:, [0, 1, 2]]
        b = faces[:, [1, 2, 0]]
        keys = np.minimum(a, b) * nv + np.maximum(a, b)
        uniq, inv = np.unique(keys.ravel(), return_inverse=True)
        ea, eb = uniq // nv, uniq % nv
        pos = np.concatenate([pos, normalize(pos[ea] + pos[eb])])
        mids = nv + inv.reshape(-1, 3)
        six = np.concatenate([faces, mids], axis=1)  # [v1, v2, v3, m12, m23, m31]
        faces = six[:, CHILD_CORNERS].reshape(-1, 3)
        all_faces.append(faces)
        counts.append(len(pos))
    for f in all_faces:
        f.setflags(write=False)
    pos.setflags(write=False)
    return DenseVertexTables(tuple(all_faces), pos, tuple(counts))


def export_obj(level: int, path=None) -> str:
    """Wavefront text for the level-``level`` mesh (``v`` then 1-based ``f`` lines)."""
    tables = build_dense_tables(level)
    pos = tables.positions[: tables.vertex_counts[level]]
    lines = [f"# geodesic icosahedron level {level}"]
    lines += [f"v {x:.9f} {y:.9f} {z:.9f}" for x, y, z in pos]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in tables.faces[level].tolist()]
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(text)
    return text
