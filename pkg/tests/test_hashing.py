import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hashsphere.geodesic import base_icosahedron, build_dense_tables, vertex_count
from hashsphere.hashing import (
    ConfigError, HashConfig, corner_linear_index, discretize, hash_joint, hash_sphere, joint_grid_size,
    phi_joint, phi_sphere,
)

import oracles

CFG = HashConfig()
coord = st.floats(-1, 1, allow_nan=False)
corner = st.integers(0, 2**12)


def test_discretize_examples():
    assert int(discretize(0.5)) == 1572864
    assert int(discretize(-1.0)) == 0
    assert int(discretize(1.0)) == 2**21
    assert int(discretize(2.0)) == 2**21  # clamped


@settings(max_examples=300)
@given(st.tuples(coord, coord, coord))
def test_hash_sphere_matches_python_ints(v):
    assert int(hash_sphere(np.array(v), CFG)) == oracles.py_sphere_hash(v)


@settings(max_examples=300)
@given(st.tuples(corner, corner, corner), st.tuples(coord, coord, coord))
def test_hash_joint_matches_python_ints(c, v):
    assert int(hash_joint(np.array(c), np.array(v), CFG)) == oracles.py_joint_hash(c, v)


def test_hash_is_32_bit():
    v = np.random.default_rng(0).uniform(-1, 1, (1000, 3))
    assert hash_sphere(v, CFG).max() < 2**32


def test_antipodes_hash_differently():
    v = base_icosahedron().vertices
    assert np.all(hash_sphere(v, CFG) != hash_sphere(-v, CFG))


def test_level6_vertex_hash_uniformity():
    """Chi-square of level-6 vertex hashes mod 2**14 inside a 99% band."""
    pos = build_dense_tables(6).positions
    counts = np.bincount((hash_sphere(pos, CFG) % np.uint64(2**14)).astype(np.int64), minlength=2**14)
    expected = len(pos) / 2**14
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert 15659 <= chi2 <= 17107


def test_corner_block_distinct_rows():
    c = np.stack(np.meshgrid(*[np.arange(4)] * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    v = np.tile(np.array([0.0, 0.6, 0.8]), (64, 1))
    rows = hash_joint(c, v, CFG) % np.uint64(2**16)
    assert len(np.unique(rows)) == 64


def test_phi_sphere_dense_and_hashed():
    pos = build_dense_tables(2).positions
    idx = np.arange(vertex_count(2))
    np.testing.assert_array_equal(phi_sphere(2, idx, pos, CFG), idx)
    small = HashConfig(table_cap=64)
    rows = phi_sphere(2, idx, pos, small)
    assert rows.max() < 64
    np.testing.assert_array_equal(rows, [oracles.py_sphere_hash(p) % 64 for p in pos])
    with pytest.raises(IndexError):
        phi_sphere(2, [vertex_count(2)], pos[:1], CFG)


def test_phi_joint_dense_layout():
    res, m = 3, 1
    nv = vertex_count(m)
    assert joint_grid_size(res, m) == 64 * nv
    c = np.array([[1, 2, 3]])
    lin = corner_linear_index(c, res)
    assert int(lin[0]) == (3 * 4 + 2) * 4 + 1
    row = phi_joint(m, c, [5], np.zeros((1, 3)), res, CFG)
    assert int(row[0]) == int(lin[0]) * nv + 5


def test_phi_joint_hashed_range():
    cfg = HashConfig(table_cap=2**10)
    rng = np.random.default_rng(1)
    c = rng.integers(0, 257, (500, 3))
    v = rng.uniform(-1, 1, (500, 3))
    rows = phi_joint(4, c, np.zeros(500, int), v, 256, cfg)
    assert rows.min() >= 0 and rows.max() < 2**10
    np.testing.assert_array_equal(rows, [oracles.py_joint_hash(a, b) % 2**10 for a, b in zip(c, v)])


def test_hash_config_validation():
    with pytest.raises(ConfigError):
        HashConfig(table_cap=1000)
    with pytest.raises(ConfigError):
        HashConfig(gamma=2**31)
    with pytest.raises(ConfigError):
        HashConfig(primes_sphere=(1, 1, 3))
    with pytest.raises(ConfigError):
        HashConfig(primes_joint_dir=(1, 5, 7))  # 1 collides with a spatial prime
    cfg = HashConfig(table_cap=2**18)
    assert HashConfig.from_dict(cfg.to_dict()) == cfg
