"""Pinhole cameras, Plucker rays, triangulation and camera-distance view sampling.

Pixel convention: origin at the top-left image corner, x grows rightward and
y grows downward. Pixels are plain float pairs (arrays of shape (2,)); they
may lie outside the frame bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegenerateProjection,
    InsufficientObservations,
    InvalidCount,
    InvalidConfig,
    NonPositiveDepth,
)

_ORTHO_TOL = 1e-9
_PLANE_EPS = 1e-12


@dataclass
class Camera:
    """Pinhole camera: intrinsics ``K`` and world-to-camera pose ``(R, t)``.

    A world point ``p`` maps to homogeneous image coordinates ``K (R p + t)``.
    ``R`` must be a proper rotation and ``K`` upper-triangular with positive
    focal entries and ``K[2, 2] == 1``.
    """

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not np.allclose(self.R @ self.R.T, np.eye(3), atol=_ORTHO_TOL):
            raise InvalidConfig("R is not orthonormal")
        if abs(np.linalg.det(self.R) - 1.0) > 1e-6:
            raise InvalidConfig("R must have det +1")
        if np.any(np.abs(self.K[np.tril_indices(3, -1)]) > 0):
            raise InvalidConfig("K must be upper-triangular")
        if abs(self.K[2, 2] - 1.0) > _ORTHO_TOL:
            raise InvalidConfig("K[2,2] must be 1")
        if self.K[0, 0] <= 0 or self.K[1, 1] <= 0:
            raise InvalidConfig("focal entries must be positive")

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates, -R^T t."""
        return -self.R.T @ self.t

    @property
    def P(self) -> np.ndarray:
        """3x4 projection matrix K [R | t]."""
        return self.K @ np.hstack([self.R, self.t[:, None]])


@dataclass
class PluckerRay:
    """Plucker line coordinates of a camera ray: unit direction ``d`` and
    moment ``m = o x d`` for ray origin ``o``. Satisfies ``|d| = 1`` and
    ``d . m = 0``."""

    d: np.ndarray
    m: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.d, self.m])


@dataclass
class RansacParams:
    """Outlier-robust triangulation settings. ``threshold`` is the inlier
    reprojection error in pixels; the minimal sample is a view pair."""

    threshold: float = 2.0
    iterations: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.threshold <= 0:
            raise InvalidConfig("ransac threshold must be > 0")
        if self.iterations < 1:
            raise InvalidConfig("ransac iterations must be >= 1")


def project(camera: Camera, point: np.ndarray) -> tuple[np.ndarray, float]:
    """Project a world point; returns (pixel, depth).

    Depth is the coordinate along the optical axis; a negative depth means
    the point lies behind the camera (the pixel is still the algebraic
    projection). Raises DegenerateProjection when the point falls on the
    camera plane.
    """
    h = camera.K @ (camera.R @ np.asarray(point, dtype=np.float64) + camera.t)
    if abs(h[2]) <= _PLANE_EPS:
        raise DegenerateProjection(f"point on camera plane (z={h[2]:.3e})")
    return h[:2] / h[2], float(h[2])


def unproject(camera: Camera, pixel: np.ndarray, depth: float) -> np.ndarray:
    """Lift a pixel at a given depth back to a world point.

    Inverse of :func:`project` for positive depth: returns
    ``R^T (depth * K^-1 [x, y, 1]^T - t)``.
    """
    if depth <= 0:
        raise NonPositiveDepth(f"depth must be > 0, got {depth}")
    x, y = np.asarray(pixel, dtype=np.float64)
    cam = depth * np.linalg.solve(camera.K, np.array([x, y, 1.0]))
    return camera.R.T @ (cam - camera.t)


def pixel_ray(camera: Camera, pixel: np.ndarray) -> PluckerRay:
    """Plucker coordinates of the viewing ray through a pixel.

    Direction ``d = normalize(R^T K^-1 [x, y, 1]^T)``, origin ``o = -R^T t``,
    moment ``m = o x d``.
    """
    x, y = np.asarray(pixel, dtype=np.float64)
    d = camera.R.T @ np.linalg.solve(camera.K, np.array([x, y, 1.0]))
    d = d / np.linalg.norm(d)
    o = camera.center
    return PluckerRay(d=d, m=np.cross(o, d))


def _constraint_rows(points: np.ndarray, proj: np.ndarray) -> np.ndarray:
    """(k, 2, 4) cross-product DLT rows, two per observation."""
    rows = np.empty((len(points), 2, 4))
    rows[:, 0] = points[:, 0, None] * proj[:, 2] - proj[:, 0]
    rows[:, 1] = points[:, 1, None] * proj[:, 2] - proj[:, 1]
    return rows


def _solve_dlt(a: np.ndarray) -> np.ndarray:
    """Smallest-singular-vector solution of one stacked (2k, 4) system.

    Raises DegenerateConfiguration when the system is rank deficient (the
    nullspace must be one-dimensional) or the solution sits at infinity.
    """
    _, s, vt = np.linalg.svd(a)
    if s[2] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateConfiguration("rank-deficient triangulation system")
    x = vt[-1]
    if abs(x[3]) <= 1e-12 * np.linalg.norm(x):
        raise DegenerateConfiguration("triangulated point at infinity")
    return x[:3] / x[3]


def _dlt(points: np.ndarray, proj: np.ndarray) -> np.ndarray:
    return _solve_dlt(_constraint_rows(points, proj).reshape(-1, 4))


def _reprojection_errors(point: np.ndarray, obs: np.ndarray, proj: np.ndarray) -> np.ndarray:
    """Per-view pixel error of a candidate 3D point; inf for views it falls
    behind."""
    h = proj @ np.append(point, 1.0)
    err = np.full(len(obs), np.inf)
    front = h[:, 2] > _PLANE_EPS
    err[front] = np.linalg.norm(h[front, :2] / h[front, 2:3] - obs[front], axis=1)
    return err


def triangulate(
    observations: list[tuple[Camera, np.ndarray]],
    ransac: RansacParams | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate one world point from (camera, pixel) observations.

    Without RANSAC, returns the homogeneous DLT least-squares point over all
    observations and an all-true inlier mask. With RANSAC, fits view pairs,
    scores inliers by reprojection error <= threshold, and refits the DLT on
    the largest inlier set (ties keep the first-found set). Whenever the
    number of distinct pairs fits the iteration budget the pairs are
    enumerated exhaustively in index order, which makes the search
    deterministic and at least as thorough as random sampling.
    """
    if len(observations) < 2:
        raise InsufficientObservations(f"need >= 2 observations, got {len(observations)}")
    pts = np.array([np.asarray(px, dtype=np.float64) for _, px in observations])
    proj = np.array([cam.P for cam, _ in observations])

    if ransac is None:
        point = _dlt(pts, proj)
        return point, np.ones(len(pts), dtype=bool)

    n = len(pts)
    all_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if len(all_pairs) <= ransac.iterations:
        pairs = np.array(all_pairs)
    else:
        rng = np.random.default_rng(ransac.seed)
        pairs = np.array(
            [rng.choice(n, size=2, replace=False) for _ in range(ransac.iterations)]
        )

    rows = _constraint_rows(pts, proj)  # (n, 2, 4)
    systems = rows[pairs].reshape(len(pairs), 4, 4)
    _, s, vt = np.linalg.svd(systems)
    sol = vt[:, -1, :]  # (P, 4)
    ok = (s[:, 2] > 1e-12 * np.maximum(s[:, 0], 1e-300)) & (
        np.abs(sol[:, 3]) > 1e-12 * np.linalg.norm(sol, axis=1)
    )
    if not ok.any():
        raise DegenerateConfiguration("ransac found no non-degenerate sample")
    cand = sol[ok, :3] / sol[ok, 3:4]  # (P', 3)

    h = np.einsum("vij,pj->pvi", proj, np.concatenate([cand, np.ones((len(cand), 1))], axis=1))
    err = np.full((len(cand), n), np.inf)
    front = h[..., 2] > _PLANE_EPS
    np.divide(h[..., 0], h[..., 2], out=h[..., 0], where=front)
    np.divide(h[..., 1], h[..., 2], out=h[..., 1], where=front)
    d = np.linalg.norm(h[..., :2] - pts[None, :, :], axis=2)
    err[front] = d[front]
    masks = err <= ransac.threshold
    best = int(np.argmax(masks.sum(axis=1)))
    best_mask = masks[best]
    if best_mask.sum() < 2:
        raise DegenerateConfiguration("ransac found no pair with two inliers")
    point = _dlt(pts[best_mask], proj[best_mask])
    return point, best_mask


def sample_views(
    cameras: list[Camera],
    k: int,
    strategy: str = "farthest",
    rng: int | np.random.Generator = 0,
) -> list[int]:
    """Pick ``k`` view indices by center distance.

    ``random`` draws distinct indices; ``nearest``/``farthest`` grow the set
    greedily from view 0 by the min-distance-to-selected criterion, ties
    resolved toward the lower index.
    """
    v = len(cameras)
    if not 1 <= k <= v:
        raise InvalidCount(f"k must be in [1, {v}], got {k}")
    if strategy == "random":
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        return [int(i) for i in gen.choice(v, size=k, replace=False)]
    if strategy not in ("nearest", "farthest"):
        raise InvalidConfig(f"unknown strategy {strategy!r}")
    centers = np.array([c.center for c in cameras])
    selected = [0]
    remaining = list(range(1, v))
    while len(selected) < k:
        dists = np.linalg.norm(
            centers[remaining][:, None, :] - centers[selected][None, :, :], axis=2
        ).min(axis=1)
        pick = int(np.argmin(dists)) if strategy == "nearest" else int(np.argmax(dists))
        selected.append(remaining.pop(pick))
    return selected
