"""Geometric baselines: triangulation-based trajectory refinement and the
two cross-view query initialization procedures.

Refinement lifts the per-view 2D predictions of each (frame, point) to a 3D
point (optionally RANSAC-filtered), reprojects it into every view and
overwrites the per-view coordinates. Visible correspondences thus repair the
tracks of points that are hidden in individual views; geometry errors for a
point are absorbed by keeping its original prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correlation import FeatureMap, sample_grid
from .errors import (
    DegenerateConfiguration,
    InsufficientObservations,
    InvalidConfig,
    NonPositiveDepth,
)
from .geometry import Camera, RansacParams, project, triangulate, unproject
from .scene import MultiViewTracks


@dataclass
class RefineMode:
    """``final`` triangulates over the whole sequence at once; ``window``
    processes each contiguous block of frames as it completes. A window no
    shorter than the sequence reproduces ``final`` exactly."""

    when: str = "final"
    window: int = 8
    use_ransac: bool = False
    occluded_only: bool = False  # replace coordinates only where not visible

    def __post_init__(self):
        if self.when not in ("final", "window"):
            raise InvalidConfig(f"unknown refine mode {self.when!r}")
        if self.window < 1:
            raise InvalidConfig("window must be >= 1")


def triangulation_refine(
    tracks: MultiViewTracks,
    cameras: list[Camera],
    mode: RefineMode | None = None,
    min_views: int = 2,
    ransac: RansacParams | None = None,
) -> MultiViewTracks:
    """Replace per-view coordinates by the reprojection of the triangulated
    3D point of each (frame, point).

    Views where the point falls behind the camera keep their original
    prediction, as does the whole (frame, point) when triangulation is
    degenerate or supported by fewer than ``min_views`` inliers. Occlusion
    states pass through unchanged.
    """
    mode = mode or RefineMode()
    v, t, n = tracks.shape
    if v < 2:
        raise InsufficientObservations("refinement needs at least two views")
    if mode.use_ransac and ransac is None:
        ransac = RansacParams()
    refined = tracks.trajectories.copy()

    window = t if mode.when == "final" else mode.window
    for start in range(0, t, window):
        for ti in range(start, min(start + window, t)):
            for ni in range(n):
                obs = [(cameras[vi], tracks.trajectories[vi, ti, ni]) for vi in range(v)]
                try:
                    point, inliers = triangulate(obs, ransac if mode.use_ransac else None)
                except DegenerateConfiguration:
                    continue
                if int(inliers.sum()) < min_views:
                    continue
                for vi in range(v):
                    if mode.occluded_only and tracks.visibility[vi, ti, ni]:
                        continue
                    pixel, depth = project(cameras[vi], point)
                    if depth > 0:
                        refined[vi, ti, ni] = pixel
    return MultiViewTracks(
        trajectories=refined,
        visibility=tracks.visibility.copy(),
        in_frame=tracks.in_frame.copy(),
    )


@dataclass
class Correspondence:
    """Cross-view match for one query: pixel, frame and validity per view.

    The query's own view is marked invalid (there is nothing to initialize)."""

    xy: np.ndarray  # (V, 2)
    t: np.ndarray  # (V,) int
    valid: np.ndarray  # (V,) bool


def query_init_feature(
    features: list[list[FeatureMap]],
    query: tuple[int, float, float, int],
    restrict_to_query_frame: bool = False,
) -> Correspondence:
    """Feature-matching initialization: correlate the query's feature vector
    against every grid cell of the other views and take the argmax.

    ``query`` is (t_q, x_q, y_q, v_q). The best frame maximizes the map's
    peak over frames (all frames by default, only t_q when restricted); ties
    resolve toward the lowest (t, y, x). Returned pixels are cell centers.
    """
    t_q, x_q, y_q, v_q = int(query[0]), float(query[1]), float(query[2]), int(query[3])
    n_views = len(features)
    n_frames = len(features[0])
    f_q = sample_grid(
        features[v_q][t_q].grid,
        np.array([x_q, y_q]) / features[v_q][t_q].stride,
    )

    xy = np.zeros((n_views, 2))
    t_star = np.zeros(n_views, dtype=np.int64)
    valid = np.ones(n_views, dtype=bool)
    valid[v_q] = False
    xy[v_q] = (x_q, y_q)
    t_star[v_q] = t_q

    frames = [t_q] if restrict_to_query_frame else range(n_frames)
    for vi in range(n_views):
        if vi == v_q:
            continue
        best = None  # (score, t, y, x); lexicographic tie-break on (-score, t, y, x)
        for ti in frames:
            fmap = features[vi][ti]
            corr = fmap.grid @ f_q  # (H', W')
            flat = int(np.argmax(corr))  # first occurrence = lowest (y, x)
            yy, xx = divmod(flat, corr.shape[1])
            score = corr[yy, xx]
            if best is None or score > best[0]:
                best = (score, ti, yy, xx)
        _, ti, yy, xx = best
        stride = features[vi][ti].stride
        t_star[vi] = ti
        xy[vi] = (xx * stride, yy * stride)
    return Correspondence(xy=xy, t=t_star, valid=valid)


def query_init_depth(
    depth,
    cameras: list[Camera],
    query: tuple[int, float, float, int],
) -> Correspondence:
    """Depth-based initialization: unproject the query with its depth and
    reproject the 3D point into every other view at the query frame.

    ``depth`` is either the scalar depth at the query pixel or a full (H, W)
    map sampled there. Views where the point lands behind the camera are
    flagged invalid.
    """
    t_q, x_q, y_q, v_q = int(query[0]), float(query[1]), float(query[2]), int(query[3])
    if np.ndim(depth) == 2:
        depth = float(sample_grid(np.asarray(depth, dtype=np.float64)[..., None], np.array([x_q, y_q]))[0])
    else:
        depth = float(depth)
    if depth <= 0:
        raise NonPositiveDepth(f"query depth must be > 0, got {depth}")
    point = unproject(cameras[v_q], np.array([x_q, y_q]), depth)

    n_views = len(cameras)
    xy = np.zeros((n_views, 2))
    t_star = np.full(n_views, t_q, dtype=np.int64)
    valid = np.ones(n_views, dtype=bool)
    valid[v_q] = False
    xy[v_q] = (x_q, y_q)
    for vi in range(n_views):
        if vi == v_q:
            continue
        pixel, z = project(cameras[vi], point)
        xy[vi] = pixel
        if z <= 0:
            valid[vi] = False
    return Correspondence(xy=xy, t=t_star, valid=valid)
