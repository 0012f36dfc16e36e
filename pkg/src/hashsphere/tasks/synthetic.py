"""Analytic spatio-directional target: a sum of position-dependent lobes.

``f(x, d) = sum_k a_k * exp(lambda_k * (d . mu_k(x) - 1))`` where the lobe
axis ``mu_k(x)`` is a base axis rotated by the rotation vector
``R_k @ (x - 0.5)``. Values lie in ``(0, sum a_k]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geodesic import normalize


@dataclass(frozen=True)
class SyntheticField5D:
    amplitudes: np.ndarray  # (K,)
    sharpness: np.ndarray  # (K,)
    base_axes: np.ndarray  # (K, 3) unit
    rotation_coeffs: np.ndarray  # (K, 3, 3): rotation vector = coeffs @ (x - 0.5)

    def __post_init__(self):
        k = len(self.amplitudes)
        if np.any(np.asarray(self.amplitudes) <= 0) or np.any(np.asarray(self.sharpness) <= 0):
            raise ValueError("lobe amplitudes and sharpness must be positive")
        if np.shape(self.base_axes) != (k, 3) or np.shape(self.rotation_coeffs) != (k, 3, 3):
            raise ValueError("inconsistent lobe parameter shapes")

    @property
    def lobes(self) -> int:
        return len(self.amplitudes)

    @property
    def peak(self) -> float:
        return float(np.sum(self.amplitudes))

    @classmethod
    def random(cls, lobes: int = 4, seed: int = 0, sharpness=(4.0, 12.0), twist: float = 1.5) -> "SyntheticField5D":
        rng = np.random.default_rng(seed)
        return cls(
            amplitudes=rng.uniform(0.5, 1.0, lobes),
            sharpness=rng.uniform(*sharpness, lobes),
            base_axes=normalize(rng.normal(size=(lobes, 3))),
            rotation_coeffs=rng.uniform(-twist, twist, size=(lobes, 3, 3)),
        )

    @classmethod
    def empty(cls) -> "SyntheticField5D":
        return cls(np.zeros(0), np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3, 3)))


def _rotate(v: np.ndarray, rotvec: np.ndarray) -> np.ndarray:
    """Rodrigues rotation of ``v`` (broadcast) by rotation vectors ``(n, 3)``."""
    angle = np.linalg.norm(rotvec, axis=-1, keepdims=True)
    safe = np.where(angle > 0, angle, 1.0)
    k = rotvec / safe
    cos, sin = np.cos(angle), np.sin(angle)
    v = np.broadcast_to(v, rotvec.shape)
    kv = np.sum(k * v, axis=-1, keepdims=True)
    return v * cos + np.cross(k, v) * sin + k * kv * (1.0 - cos)


def lobe_axes(x, field: SyntheticField5D) -> np.ndarray:
    """``(n, K, 3)`` lobe axes at positions ``x``."""
    x = np.reshape(np.asarray(x, dtype=np.float64), (-1, 3))
    out = np.empty((len(x), field.lobes, 3))
    for k in range(field.lobes):
        rotvec = (x - 0.5) @ field.rotation_coeffs[k].T
        out[:, k] = normalize(_rotate(field.base_axes[k], rotvec))
    return out


def synthetic_field(x, d, field: SyntheticField5D) -> np.ndarray:
    """Field values at paired positions ``(n, 3)`` and directions ``(n, 3)``."""
    x = np.reshape(np.asarray(x, dtype=np.float64), (-1, 3))
    d = np.reshape(np.asarray(d, dtype=np.float64), (-1, 3))
    if field.lobes == 0:
        return np.zeros(len(x))
    mu = lobe_axes(x, field)
    cosang = np.sum(mu * d[:, None, :], axis=-1)
    return np.exp(field.sharpness[None, :] * (cosang - 1.0)) @ field.amplitudes
