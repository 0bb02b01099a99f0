"""Camera-aware token conditioning: per-point Plucker rays projected through
an MLP, plus sinusoidal temporal position encoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, OddDimension
from .geometry import Camera
from .nn import gelu


@dataclass
class RayField:
    """Plucker coordinates of the viewing ray of every trajectory entry,
    shaped (V, T, N, 6) as [direction | moment]."""

    rays: np.ndarray


def ray_field(cameras: list[Camera], trajectories) -> RayField:
    """Rays through the current hypothesis pixels of every (view, frame,
    point). Recomputed whenever the hypothesis moves, so camera conditioning
    follows the track."""
    tracks = getattr(trajectories, "trajectories", trajectories)
    tracks = np.asarray(tracks, dtype=np.float64)
    v, t, n, _ = tracks.shape
    if len(cameras) != v:
        raise DimensionMismatch(f"{len(cameras)} cameras for {v} trajectory views")
    rays = np.empty((v, t, n, 6))
    ones = np.ones((t, n, 1))
    for vi, cam in enumerate(cameras):
        homo = np.concatenate([tracks[vi], ones], axis=-1)  # (T, N, 3)
        d = homo @ np.linalg.inv(cam.K).T @ cam.R  # row-vector form of R^T K^-1 x
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        o = cam.center
        rays[vi, ..., :3] = d
        rays[vi, ..., 3:] = np.cross(np.broadcast_to(o, d.shape), d)
    return RayField(rays=rays)


def plucker_embedding(rays: RayField, weights: dict) -> np.ndarray:
    """Pointwise MLP (6 -> 2d -> d) over the ray field; returns (V,T,N,d)."""
    w1, b1 = weights["plucker.w1"], weights["plucker.b1"]
    w2, b2 = weights["plucker.w2"], weights["plucker.b2"]
    if w1.shape[0] != 6 or w1.shape[1] != b1.shape[0] or w2.shape[0] != w1.shape[1]:
        raise DimensionMismatch("plucker MLP weights are inconsistently shaped")
    return gelu(rays.rays @ w1 + b1) @ w2 + b2


def sinusoidal_pe(t: int | np.ndarray, d: int) -> np.ndarray:
    """Classic interleaved sin/cos position code with wavelengths
    10000^(2k/d); ``t`` may be a scalar or an array of frame indices."""
    if d % 2:
        raise OddDimension(f"encoding dimension must be even, got {d}")
    t = np.asarray(t, dtype=np.float64)
    k = np.arange(d // 2)
    rates = 1.0 / 10000.0 ** (2.0 * k / d)
    angles = t[..., None] * rates
    out = np.empty(t.shape + (d,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out
