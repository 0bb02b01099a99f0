"""Multi-view point tracking toolkit.

Generates synthetic multi-view scenes with exact ground truth, runs a
correlation/attention tracker over them, refines trajectories with
multi-view triangulation, and scores everything with the standard point
tracking metric suite. All pipelines are seeded and reproduce byte-for-byte.
"""

__version__ = "0.1.0"

from .geometry import Camera, PluckerRay, RansacParams
from .losses import LossConfig
from .metrics import EvalReport
from .scene import MultiViewTracks, QuerySet, Scene, SceneConfig
from .tracker import ModelWeights, TrackerConfig, TrackerState

__all__ = [
    "Camera",
    "EvalReport",
    "LossConfig",
    "ModelWeights",
    "MultiViewTracks",
    "PluckerRay",
    "QuerySet",
    "RansacParams",
    "Scene",
    "SceneConfig",
    "TrackerConfig",
    "TrackerState",
    "__version__",
]
