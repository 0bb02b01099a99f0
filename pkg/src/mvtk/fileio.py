"""Scene, tracks and feature-grid file schemas on top of the MVTK container.

Every writer embeds the toolkit version, the seed and the full generating
config in the header, so a file is also the manifest of the run that made it.
"""

from __future__ import annotations

import numpy as np

from . import __version__
from .container import read_container, write_container
from .correlation import FeatureMap
from .errors import InvalidConfig
from .geometry import Camera
from .scene import MultiViewTracks, QuerySet, Scene, SceneConfig


def _base_header(kind: str) -> dict:
    return {"kind": kind, "toolkit_version": __version__}


def save_scene(path, scene: Scene, gt: MultiViewTracks, queries: QuerySet, query_mode: str = "first") -> None:
    c = scene.config
    header = _base_header("scene")
    header.update(
        seed=c.seed,
        n_views=c.n_views,
        n_frames=c.n_frames,
        n_points=c.n_points,
        radius_lo=c.radius_range[0],
        radius_hi=c.radius_range[1],
        angle_lo_deg=c.angle_range_deg[0],
        angle_hi_deg=c.angle_range_deg[1],
        image_h=c.image_hw[0],
        image_w=c.image_hw[1],
        motion_amplitude=c.motion_amplitude,
        n_occluders=c.n_occluders,
        occluder_radius_lo=c.occluder_radius_range[0],
        occluder_radius_hi=c.occluder_radius_range[1],
        cluster_size=c.cluster_size,
        scene_extent=c.scene_extent,
        feature_dim=c.feature_dim,
        feature_stride=c.feature_stride,
        feature_noise=c.feature_noise,
        query_mode=query_mode,
    )
    arrays = {
        "camera_k": np.stack([cam.K for cam in scene.cameras]),
        "camera_r": np.stack([cam.R for cam in scene.cameras]),
        "camera_t": np.stack([cam.t for cam in scene.cameras]),
        "tracks_3d": scene.point_tracks_3d,
        "occluder_centers": scene.occluder_centers,
        "occluder_radii": scene.occluder_radii,
        "anchor_features": scene.anchor_features,
        "gt_tracks": gt.trajectories,
        "gt_visibility": gt.visibility.astype(np.uint8),
        "gt_in_frame": gt.in_frame.astype(np.uint8),
        "query_t": queries.t.astype(np.float64),
        "query_xy": queries.xy,
    }
    write_container(path, header, arrays)


def load_scene(path) -> tuple[Scene, MultiViewTracks, QuerySet]:
    header, arrays = read_container(path)
    if header.get("kind") != "scene":
        raise InvalidConfig(f"{path} is not a scene file")
    config = SceneConfig(
        n_views=int(header["n_views"]),
        n_frames=int(header["n_frames"]),
        n_points=int(header["n_points"]),
        radius_range=(float(header["radius_lo"]), float(header["radius_hi"])),
        angle_range_deg=(float(header["angle_lo_deg"]), float(header["angle_hi_deg"])),
        image_hw=(int(header["image_h"]), int(header["image_w"])),
        motion_amplitude=float(header["motion_amplitude"]),
        n_occluders=int(header["n_occluders"]),
        occluder_radius_range=(
            float(header["occluder_radius_lo"]),
            float(header["occluder_radius_hi"]),
        ),
        seed=int(header["seed"]),
        cluster_size=int(header["cluster_size"]),
        scene_extent=float(header["scene_extent"]),
        feature_dim=int(header["feature_dim"]),
        feature_stride=int(header["feature_stride"]),
        feature_noise=float(header["feature_noise"]),
    )
    cameras = [
        Camera(K=k, R=r, t=t)
        for k, r, t in zip(arrays["camera_k"], arrays["camera_r"], arrays["camera_t"])
    ]
    scene = Scene(
        config=config,
        cameras=cameras,
        point_tracks_3d=arrays["tracks_3d"],
        occluder_centers=arrays["occluder_centers"],
        occluder_radii=arrays["occluder_radii"],
        anchor_features=arrays["anchor_features"],
    )
    gt = MultiViewTracks(
        trajectories=arrays["gt_tracks"],
        visibility=arrays["gt_visibility"].astype(bool),
        in_frame=arrays["gt_in_frame"].astype(bool),
    )
    queries = QuerySet(t=arrays["query_t"].astype(np.int64), xy=arrays["query_xy"])
    return scene, gt, queries


def save_tracks(path, tracks: np.ndarray, occ_prob: np.ndarray, view_indices, header_extra: dict) -> None:
    header = _base_header("tracks")
    header.update(header_extra)
    arrays = {
        "tracks": np.asarray(tracks, dtype=np.float64),
        "occ_prob": np.asarray(occ_prob, dtype=np.float64),
        "view_indices": np.asarray(view_indices, dtype=np.float64),
    }
    write_container(path, header, arrays)


def load_tracks(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    header, arrays = read_container(path)
    if header.get("kind") != "tracks":
        raise InvalidConfig(f"{path} is not a tracks file")
    return (
        arrays["tracks"],
        arrays["occ_prob"],
        arrays["view_indices"].astype(np.int64),
        header,
    )


def save_features(path, features: list[list[FeatureMap]], extra: dict | None = None) -> None:
    """Persist a (V, T) grid of feature maps; all maps must share shape and
    stride."""
    stride = features[0][0].stride
    stacked = np.stack([np.stack([fm.grid for fm in row]) for row in features])
    header = _base_header("features")
    header["stride"] = stride
    header.update(extra or {})
    write_container(path, header, {"features": stacked})


def load_features(path) -> list[list[FeatureMap]]:
    header, arrays = read_container(path)
    if header.get("kind") != "features":
        raise InvalidConfig(f"{path} is not a features file")
    stride = float(header["stride"])
    stacked = arrays["features"]
    return [[FeatureMap(grid=g, stride=stride) for g in row] for row in stacked]
