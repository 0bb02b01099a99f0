"""Bilinear feature sampling, local 4D correlation and token projection.

Correlation is computed only along time, between a patch around the current
hypothesis in the frame-``t`` feature map and a patch around the query in the
query-frame map of the same view. Cross-view correlation is deliberately not
provided: wide baselines make local appearance similarity unreliable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidConfig

N_FOURIER_FREQS = 8
POS_ENCODING_DIM = 4 * N_FOURIER_FREQS  # sin+cos per coordinate per frequency
_ZERO_NORM = 1e-12


@dataclass
class FeatureMap:
    """Feature grid of one (view, frame); ``stride`` converts pixel
    coordinates to grid coordinates."""

    grid: np.ndarray  # (H', W', C)
    stride: float = 1.0

    def __post_init__(self):
        if self.grid.ndim != 3 or self.grid.shape[2] < 1:
            raise InvalidConfig("feature grid must be (H', W', C) with C >= 1")


@dataclass
class CorrTensor:
    """Pairwise cosine similarities between two feature neighborhoods,
    shaped ((2*r_p+1)^2, (2*r_q+1)^2) in row-major (dy, dx) offset order."""

    values: np.ndarray
    r_p: int
    r_q: int


def sample_grid(grid: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Bilinear lookup at float grid coordinates (..., 2) as (x, y).

    Coordinates clamp to the border, so queries far outside return the edge
    cell's feature.
    """
    h, w = grid.shape[:2]
    x = np.clip(coords[..., 0], 0.0, w - 1.0)
    y = np.clip(coords[..., 1], 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x0 = np.minimum(x0, w - 2) if w > 1 else x0 * 0
    y0 = np.minimum(y0, h - 2) if h > 1 else y0 * 0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    top = grid[y0, x0] * (1 - fx) + grid[y0, x1] * fx
    bottom = grid[y1, x0] * (1 - fx) + grid[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def bilinear_sample(fm: FeatureMap, xy: np.ndarray) -> np.ndarray:
    """Feature vector at a pixel position, border-clamped."""
    return sample_grid(fm.grid, np.asarray(xy, dtype=np.float64) / fm.stride)


def patch_offsets(radius: int) -> np.ndarray:
    """Integer grid-step offsets of a (2r+1)^2 neighborhood, row-major in
    (dy, dx)."""
    r = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(r, r, indexing="ij")
    return np.stack([dx.ravel(), dy.ravel()], axis=1).astype(np.float64)


def sample_patch(fm: FeatureMap, center_px: np.ndarray, radius: int) -> np.ndarray:
    """((2r+1)^2, C) features around a pixel, offsets in whole grid steps."""
    base = np.asarray(center_px, dtype=np.float64) / fm.stride
    return sample_grid(fm.grid, base + patch_offsets(radius))


def cosine_pairs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity between every row pair of (..., Ka, C) and
    (..., Kb, C); zero vectors correlate as 0."""
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    dots = np.einsum("...ic,...jc->...ij", a, b)
    denom = na[..., :, None] * nb[..., None, :]
    return np.where(denom > _ZERO_NORM, dots / np.maximum(denom, _ZERO_NORM), 0.0)


def local_4d_correlation(
    f_t: FeatureMap,
    f_tq: FeatureMap,
    p: np.ndarray,
    q: np.ndarray,
    r_p: int,
    r_q: int,
) -> CorrTensor:
    """Cosine-similarity tensor between the neighborhood around the current
    hypothesis ``p`` in ``f_t`` and the neighborhood around the query ``q``
    in the query-frame map ``f_tq``."""
    if r_p < 0 or r_q < 0:
        raise InvalidConfig("correlation radii must be >= 0")
    return CorrTensor(
        values=cosine_pairs(sample_patch(f_t, p, r_p), sample_patch(f_tq, q, r_q)),
        r_p=r_p,
        r_q=r_q,
    )


def fourier_features(offset: np.ndarray, n_freqs: int = N_FOURIER_FREQS) -> np.ndarray:
    """Sin/cos encoding of a pixel offset (..., 2) -> (..., 4*n_freqs).

    Frequencies are log-spaced octaves; wavelengths run from 256 px down to
    2 px so both coarse and sub-pixel displacements are resolvable.
    """
    offset = np.asarray(offset, dtype=np.float64)
    freqs = np.pi * 2.0 ** np.arange(n_freqs) / 128.0
    angles = offset[..., None] * freqs  # (..., 2, F)
    enc = np.stack([np.sin(angles), np.cos(angles)], axis=-1)  # (..., 2, F, 2)
    return enc.reshape(*offset.shape[:-1], 4 * n_freqs)


def tokenize(corr: CorrTensor, pos_offset: np.ndarray, weights: dict) -> np.ndarray:
    """Project flattened correlation plus encoded position offset to a token.

    ``weights`` holds ``token_proj.w`` of shape (corr_len + encoding, d) and
    ``token_proj.b`` of shape (d,).
    """
    w, b = weights["token_proj.w"], weights["token_proj.b"]
    inputs = np.concatenate([corr.values.ravel(), fourier_features(pos_offset)])
    if w.shape[0] != inputs.shape[0] or w.shape[1] != b.shape[0]:
        raise DimensionMismatch(
            f"token projection expects input {w.shape[0]}, got {inputs.shape[0]}"
        )
    return inputs @ w + b
