"""Direction sampling helpers."""

from __future__ import annotations

import numpy as np


def _from_z_phi(z: np.ndarray, phi: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    d = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def sample_uniform_sphere(seed, n: int) -> np.ndarray:
    """``n`` uniform directions by inversion: z ~ U[-1, 1], azimuth ~ U[0, 2pi).

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    return _from_z_phi(z, phi)


def sample_latitude_band(rng: np.random.Generator, theta_lo: float, theta_hi: float, n: int) -> np.ndarray:
    """Area-uniform directions with colatitude in ``[theta_lo, theta_hi]``."""
    z = rng.uniform(np.cos(theta_hi), np.cos(theta_lo), n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    return _from_z_phi(z, phi)


def fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic, near-uniform spiral point set on the sphere."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return _from_z_phi(z, np.mod(phi, 2.0 * np.pi))


def rotate_away(dirs: np.ndarray, angle: float, axis=(0.3, -0.5, 0.81)) -> np.ndarray:
    """Tilt each direction by exactly ``angle`` radians along a tangent.

    The tangent is ``normalize(cross(d, axis))`` for a fixed generic axis.
    """
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    t = np.cross(dirs, a)
    t /= np.linalg.norm(t, axis=-1, keepdims=True)
    out = np.cos(angle) * dirs + np.sin(angle) * t
    return out / np.linalg.norm(out, axis=-1, keepdims=True)
