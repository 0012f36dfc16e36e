"""Lat-long environment maps, bilinear lookup and built-in procedural targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geodesic import as_directions, normalize
from .sampling import sample_uniform_sphere

PROCEDURAL = ("constant", "gradient", "noise", "pointlights")


@dataclass
class EnvMap:
    """Equirectangular radiance map; row 0 is the +z pole.

    Column ``j`` spans longitudes ``[-pi + 2pi j / W, -pi + 2pi (j+1) / W]``
    with longitude ``atan2(y, x)``.
    """

    pixels: np.ndarray  # (H, W, 3) float32, linear radiance

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("pixels must be an (H, W, 3) array")
        if not np.all(np.isfinite(px)) or np.any(px < 0):
            raise ValueError("radiance must be finite and non-negative")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def texel_directions(height: int, width: int) -> np.ndarray:
    """Directions through texel centers, shape ``(H, W, 3)``."""
    theta = (np.arange(height) + 0.5) * np.pi / height
    phi = (np.arange(width) + 0.5) * 2.0 * np.pi / width - np.pi
    st = np.sin(theta)[:, None]
    return np.stack(
        [st * np.cos(phi)[None, :], st * np.sin(phi)[None, :], np.broadcast_to(np.cos(theta)[:, None], (height, width))],
        axis=-1,
    )


def stratified_texel_directions(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """One area-uniform random direction inside every texel, ``(H * W, 3)``."""
    i, j = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    z_hi = np.cos(i * np.pi / height)
    z_lo = np.cos((i + 1) * np.pi / height)
    z = z_lo + (z_hi - z_lo) * rng.random(i.shape)
    phi = (j + rng.random(j.shape)) * 2.0 * np.pi / width - np.pi
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1).reshape(-1, 3)


def envmap_lookup(env: EnvMap, d) -> np.ndarray:
    """Bilinear radiance lookup; longitude wraps, rows clamp at the poles."""
    d = as_directions(d).reshape(-1, 3)
    h, w = env.height, env.width
    u = (np.arctan2(d[:, 1], d[:, 0]) + np.pi) / (2.0 * np.pi)
    v = np.arccos(np.clip(d[:, 2], -1.0, 1.0)) / np.pi
    px = u * w - 0.5
    py = v * h - 0.5
    j0 = np.floor(px).astype(np.int64)
    i0 = np.floor(py).astype(np.int64)
    fx = (px - j0)[:, None]
    fy = (py - i0)[:, None]
    j1 = (j0 + 1) % w
    j0 = j0 % w
    i1 = np.clip(i0 + 1, 0, h - 1)
    i0 = np.clip(i0, 0, h - 1)
    p = env.pixels.astype(np.float64)
    top = p[i0, j0] * (1.0 - fx) + p[i0, j1] * fx
    bottom = p[i1, j0] * (1.0 - fx) + p[i1, j1] * fx
    return top * (1.0 - fy) + bottom * fy


def _lobe_sum(d: np.ndarray, axes: np.ndarray, sharpness: np.ndarray, amps: np.ndarray, chunk: int = 8192) -> np.ndarray:
    out = np.zeros((len(d), amps.shape[1]))
    for s in range(0, len(d), chunk):
        cosang = d[s : s + chunk] @ axes.T  # (c, K)
        out[s : s + chunk] = np.exp(sharpness[None, :] * (cosang - 1.0)) @ amps
    return out


def procedural_radiance(name: str, d: np.ndarray, seed: int = 7) -> np.ndarray:
    """Analytic radiance of a named procedural environment at directions ``d``."""
    d = np.asarray(d, dtype=np.float64).reshape(-1, 3)
    rng = np.random.default_rng(seed)
    if name == "constant":
        return np.full((len(d), 3), 1.0)
    if name == "gradient":
        t = 0.5 + 0.5 * d[:, 2:3]
        sky = np.array([0.25, 0.45, 1.0])
        ground = np.array([0.6, 0.45, 0.3])
        return ground * (1.0 - t) + sky * t + 0.2 * (0.5 + 0.5 * d[:, 0:1])
    if name == "noise":
        # Statistically isotropic: random lobe axes, log-space sum.
        k = 512
        axes = sample_uniform_sphere(int(rng.integers(2**31)), k)
        sharp = np.full(k, 300.0)
        amps = rng.normal(0.0, 0.6, size=(k, 3))
        return np.exp(_lobe_sum(d, axes, sharp, amps))
    if name == "pointlights":
        t = 0.5 + 0.5 * d[:, 2:3]
        base = 0.05 + 0.3 * t * np.array([0.5, 0.7, 1.0])
        k = 8
        axes = normalize(rng.normal(size=(k, 3)))
        sharp = rng.uniform(300.0, 3000.0, size=k)
        amps = rng.uniform(5.0, 60.0, size=(k, 1)) * rng.uniform(0.4, 1.0, size=(k, 3))
        return base + _lobe_sum(d, axes, sharp, amps)
    raise ValueError(f"unknown procedural map {name!r}; choose from {PROCEDURAL}")


def procedural_envmap(name: str, width: int = 512, height: int = 256, seed: int = 7) -> EnvMap:
    d = texel_directions(height, width).reshape(-1, 3)
    rad = procedural_radiance(name, d, seed)
    return EnvMap(rad.reshape(height, width, 3).astype(np.float32))
