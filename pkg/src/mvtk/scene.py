"""Procedural multi-view scenes with exact ground truth.

Cameras sit on a hemisphere around the origin and look at it; scene points
move in rigid clusters along smooth polynomial paths; occluder spheres drift
through the working volume. Ground-truth pixel tracks, per-view visibility
and splat-based feature grids all derive analytically from this state, so
every quantity is reproducible bit-for-bit from the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correlation import FeatureMap
from .errors import InvalidConfig, NoVisibleFrame, SamplingExhausted
from .geometry import Camera

FEATURE_SIGMA = 2.0  # gaussian splat width, in grid cells

_NOISE_TAG = 7919
_MAX_SCENE_ATTEMPTS = 50


@dataclass
class SceneConfig:
    n_views: int = 4
    n_frames: int = 16
    n_points: int = 32
    radius_range: tuple[float, float] = (10.0, 12.0)
    angle_range_deg: tuple[float, float] = (10.0, 45.0)
    image_hw: tuple[int, int] = (48, 64)
    motion_amplitude: float = 1.0  # world units; ~6 px at the default rig
    n_occluders: int = 0
    occluder_radius_range: tuple[float, float] = (0.3, 0.8)
    seed: int = 0
    cluster_size: int = 4
    scene_extent: float = 2.5
    feature_dim: int = 16
    feature_stride: int = 1
    feature_noise: float = 0.02

    def __post_init__(self):
        if min(self.n_views, self.n_frames, self.n_points) < 1:
            raise InvalidConfig("view/frame/point counts must be >= 1")
        h, w = self.image_hw
        if h < 8 or w < 8:
            raise InvalidConfig("image size must be at least 8x8")
        for name, (lo, hi) in (
            ("radius_range", self.radius_range),
            ("angle_range_deg", self.angle_range_deg),
            ("occluder_radius_range", self.occluder_radius_range),
        ):
            if lo > hi or lo <= 0:
                raise InvalidConfig(f"{name} must be a nonempty positive range")
        if self.cluster_size < 1 or self.feature_dim < 1:
            raise InvalidConfig("cluster_size and feature_dim must be >= 1")
        if self.feature_stride < 1 or h % self.feature_stride or w % self.feature_stride:
            raise InvalidConfig("feature_stride must divide both image dimensions")
        if self.n_occluders < 0 or self.motion_amplitude < 0 or self.feature_noise < 0:
            raise InvalidConfig("counts and amplitudes must be non-negative")


@dataclass
class Scene:
    config: SceneConfig
    cameras: list[Camera]
    point_tracks_3d: np.ndarray  # (N, T, 3)
    occluder_centers: np.ndarray  # (O, T, 3)
    occluder_radii: np.ndarray  # (O,)
    anchor_features: np.ndarray  # (N, C), unit rows


@dataclass
class MultiViewTracks:
    """Per-view pixel trajectories with visibility state.

    ``visible`` implies ``in_frame``; a point can be in frame yet hidden by
    an occluder (in-frame occlusion) or outside the bounds entirely.
    """

    trajectories: np.ndarray  # (V, T, N, 2)
    visibility: np.ndarray  # (V, T, N) bool
    in_frame: np.ndarray  # (V, T, N) bool

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.trajectories.shape[:3]


@dataclass
class QuerySet:
    """Anchor frame and pixel per (view, point); frames are 0-based."""

    t: np.ndarray  # (V, N) int
    xy: np.ndarray  # (V, N, 2)


def _rotation_looking_at_origin(center: np.ndarray) -> np.ndarray:
    """World-to-camera rotation with +z toward the origin, y roughly down."""
    forward = -center / np.linalg.norm(center)
    up = np.array([0.0, 0.0, 1.0])
    x_axis = np.cross(up, forward)
    if np.linalg.norm(x_axis) < 1e-8:  # camera straight above the origin
        x_axis = np.array([1.0, 0.0, 0.0])
    x_axis = x_axis / np.linalg.norm(x_axis)
    y_axis = np.cross(forward, x_axis)
    return np.stack([x_axis, y_axis, forward])


def shared_intrinsics(config: SceneConfig) -> np.ndarray:
    h, w = config.image_hw
    f = float(max(h, w))
    return np.array([[f, 0.0, w / 2.0], [0.0, f, h / 2.0], [0.0, 0.0, 1.0]])


def sample_cameras(config: SceneConfig, rng: int | np.random.Generator | None = None) -> list[Camera]:
    """Sample a chained hemisphere rig: each next center sits at an angular
    separation (drawn from the configured range) from the previous one, at
    its own radius, above the ground plane."""
    rng = _as_rng(rng, config.seed, 11)
    lo, hi = np.deg2rad(config.angle_range_deg)
    k = shared_intrinsics(config)

    directions = [_hemisphere_direction(rng)]
    for _ in range(1, config.n_views):
        prev = directions[-1]
        for attempt in range(1000):
            alpha = rng.uniform(lo, hi)
            axis = _orthogonal_axis(rng, prev)
            cand = prev * np.cos(alpha) + np.cross(axis, prev) * np.sin(alpha)
            if cand[2] > 0.05:  # stay on the upper hemisphere
                directions.append(cand / np.linalg.norm(cand))
                break
        else:
            raise SamplingExhausted("no valid chained camera position in 1000 attempts")

    cameras = []
    for direction in directions:
        center = direction * rng.uniform(*config.radius_range)
        r = _rotation_looking_at_origin(center)
        cameras.append(Camera(K=k.copy(), R=r, t=-r @ center))
    return cameras


def _hemisphere_direction(rng: np.random.Generator) -> np.ndarray:
    phi = rng.uniform(0.0, 2.0 * np.pi)
    cos_theta = rng.uniform(0.15, 0.95)
    sin_theta = np.sqrt(1.0 - cos_theta**2)
    return np.array([sin_theta * np.cos(phi), sin_theta * np.sin(phi), cos_theta])


def _orthogonal_axis(rng: np.random.Generator, u: np.ndarray) -> np.ndarray:
    while True:
        w = rng.normal(size=3)
        a = w - np.dot(w, u) * u
        norm = np.linalg.norm(a)
        if norm > 1e-6:
            return a / norm


def _smooth_paths(rng: np.random.Generator, count: int, t: int, amplitude: float) -> np.ndarray:
    """(count, T, 3) cubic displacement curves, peak norm equal to amplitude."""
    tau = np.linspace(0.0, 1.0, t) if t > 1 else np.zeros(1)
    basis = np.stack([tau, tau**2, tau**3])  # (3, T)
    coeff = rng.normal(size=(count, 3, 3))  # (count, power, xyz)
    disp = np.einsum("kpc,pt->ktc", coeff, basis)
    peak = np.linalg.norm(disp, axis=2).max(axis=1)
    scale = np.where(peak > 0, amplitude / np.maximum(peak, 1e-12), 0.0)
    return disp * scale[:, None, None]


def generate_scene(config: SceneConfig, rng: int | np.random.Generator | None = None) -> Scene:
    """Build a scene whose every point is visible at least once per view.

    Point layouts are redrawn (same rng stream) until that holds, so query
    sampling is always well defined.
    """
    rng = _as_rng(rng, config.seed, 23)
    cameras = sample_cameras(config, rng)
    n, t = config.n_points, config.n_frames

    for _ in range(_MAX_SCENE_ATTEMPTS):
        n_clusters = -(-n // config.cluster_size)
        bases = rng.uniform(-1.0, 1.0, size=(n_clusters, 3)) * config.scene_extent * 0.6
        offsets = rng.uniform(-1.0, 1.0, size=(n, 3)) * config.scene_extent * 0.35
        cluster_of = np.arange(n) % n_clusters
        paths = _smooth_paths(rng, n_clusters, t, config.motion_amplitude)
        tracks = bases[cluster_of][:, None, :] + offsets[:, None, :] + paths[cluster_of]

        occ_centers = np.zeros((config.n_occluders, t, 3))
        occ_radii = np.zeros(config.n_occluders)
        if config.n_occluders:
            occ_base = rng.uniform(-1.0, 1.0, size=(config.n_occluders, 3)) * config.scene_extent
            occ_paths = _smooth_paths(rng, config.n_occluders, t, config.motion_amplitude * 1.5)
            occ_centers = occ_base[:, None, :] + occ_paths
            occ_radii = rng.uniform(*config.occluder_radius_range, size=config.n_occluders)

        anchors = rng.normal(size=(n, config.feature_dim))
        anchors /= np.linalg.norm(anchors, axis=1, keepdims=True)

        scene = Scene(
            config=config,
            cameras=cameras,
            point_tracks_3d=tracks,
            occluder_centers=occ_centers,
            occluder_radii=occ_radii,
            anchor_features=anchors,
        )
        if render_ground_truth(scene).visibility.any(axis=1).all():
            return scene
    raise NoVisibleFrame("could not realize a scene where every point is seen in every view")


def _project_all(scene: Scene, v: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixels (T, N, 2) and depths (T, N) of all points in view ``v``."""
    cam = scene.cameras[v]
    pts = scene.point_tracks_3d.transpose(1, 0, 2)  # (T, N, 3)
    h = pts @ cam.R.T @ cam.K.T + cam.t @ cam.K.T
    z = h[..., 2]
    safe = np.where(np.abs(z) > 1e-12, z, np.where(z < 0, -1e-12, 1e-12))
    return h[..., :2] / safe[..., None], z


def _occluded(center: np.ndarray, pts: np.ndarray, occ_centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """True where the segment camera-center -> point crosses any sphere.

    ``pts`` is (T, N, 3), ``occ_centers`` is (O, T, 3); returns (T, N) bool.
    """
    if len(radii) == 0:
        return np.zeros(pts.shape[:2], dtype=bool)
    u = pts - center  # (T, N, 3)
    uu = np.einsum("tnc,tnc->tn", u, u)[:, :, None]
    s = np.einsum("toc,tnc->tno", occ_centers.transpose(1, 0, 2) - center, u)
    s = np.clip(s / np.maximum(uu, 1e-300), 0.0, 1.0)
    closest = center + s[..., None] * u[:, :, None, :]  # (T, N, O, 3)
    d = np.linalg.norm(closest - occ_centers.transpose(1, 0, 2)[:, None, :, :], axis=3)
    return (d <= radii[None, None, :]).any(axis=2)


def render_ground_truth(scene: Scene) -> MultiViewTracks:
    """Project every point into every view and resolve visibility.

    A point is in frame when its pixel lies inside [0, W) x [0, H) with
    positive depth, and visible when additionally no occluder sphere cuts the
    line of sight.
    """
    h_img, w_img = scene.config.image_hw
    v = len(scene.cameras)
    t, n = scene.config.n_frames, scene.config.n_points
    tracks = np.zeros((v, t, n, 2))
    in_frame = np.zeros((v, t, n), dtype=bool)
    visible = np.zeros((v, t, n), dtype=bool)
    pts = scene.point_tracks_3d.transpose(1, 0, 2)
    for vi in range(v):
        px, z = _project_all(scene, vi)
        tracks[vi] = px
        inside = (
            (px[..., 0] >= 0.0)
            & (px[..., 0] < w_img)
            & (px[..., 1] >= 0.0)
            & (px[..., 1] < h_img)
            & (z > 0.0)
        )
        occ = _occluded(scene.cameras[vi].center, pts, scene.occluder_centers, scene.occluder_radii)
        in_frame[vi] = inside
        visible[vi] = inside & ~occ
    return MultiViewTracks(trajectories=tracks, visibility=visible, in_frame=in_frame)


def sample_queries(
    gt: MultiViewTracks,
    rng: int | np.random.Generator | None = None,
    mode: str = "first",
) -> QuerySet:
    """Anchor one query per (view, point): the first visible frame in
    ``first`` mode, a uniformly drawn visible frame in ``random`` mode."""
    if mode not in ("first", "random"):
        raise InvalidConfig(f"unknown query mode {mode!r}")
    gen = _as_rng(rng, 0, 31)
    v, t, n = gt.shape
    t_q = np.zeros((v, n), dtype=np.int64)
    xy = np.zeros((v, n, 2))
    for vi in range(v):
        for ni in range(n):
            frames = np.flatnonzero(gt.visibility[vi, :, ni])
            if frames.size == 0:
                raise NoVisibleFrame(f"point {ni} never visible in view {vi}")
            t_q[vi, ni] = frames[0] if mode == "first" else gen.choice(frames)
            xy[vi, ni] = gt.trajectories[vi, t_q[vi, ni], ni]
    return QuerySet(t=t_q, xy=xy)


def feature_field(scene: Scene, v: int, t: int) -> FeatureMap:
    """Synthesize the feature grid for one (view, frame).

    Every currently visible point splats its anchor feature with a gaussian
    footprint (sigma = 2 grid cells) at its projected grid location; seeded
    noise is added on top. The same scene point therefore yields correlated
    features wherever it is seen.
    """
    config = scene.config
    h_img, w_img = config.image_hw
    stride = config.feature_stride
    h_grid, w_grid = h_img // stride, w_img // stride

    px, z = _project_all(scene, v)
    occ = _occluded(
        scene.cameras[v].center,
        scene.point_tracks_3d.transpose(1, 0, 2),
        scene.occluder_centers,
        scene.occluder_radii,
    )
    keep = (z[t] > 0.0) & ~occ[t]

    grid = np.zeros((h_grid, w_grid, config.feature_dim))
    if keep.any():
        gx = px[t, keep, 0] / stride
        gy = px[t, keep, 1] / stride
        jj = np.arange(w_grid)
        ii = np.arange(h_grid)
        d2 = (jj[None, None, :] - gx[:, None, None]) ** 2 + (
            ii[None, :, None] - gy[:, None, None]
        ) ** 2
        weights = np.exp(-d2 / (2.0 * FEATURE_SIGMA**2))
        grid = np.einsum("khw,kc->hwc", weights, scene.anchor_features[keep])
    if config.feature_noise > 0:
        noise_rng = np.random.default_rng([config.seed, _NOISE_TAG, v, t])
        grid = grid + config.feature_noise * noise_rng.normal(size=grid.shape)
    return FeatureMap(grid=grid, stride=float(stride))


def feature_volume(scene: Scene) -> list[list[FeatureMap]]:
    """All feature grids of a scene, indexed [view][frame]."""
    v, t = scene.config.n_views, scene.config.n_frames
    return [[feature_field(scene, vi, ti) for ti in range(t)] for vi in range(v)]


def ground_truth_depths(scene: Scene) -> np.ndarray:
    """(V, T, N) depth of every point along each camera's optical axis."""
    return np.stack([_project_all(scene, v)[1] for v in range(len(scene.cameras))])


def _as_rng(rng, seed: int, tag: int) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return np.random.default_rng([seed, tag])
    return np.random.default_rng([int(rng), tag])
