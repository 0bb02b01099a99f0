"""Single-scene fitting harness.

Trains ModelWeights on one generated scene by gradient descent on the
discounted track and occlusion losses. Gradients are truncated at the
refinement boundaries: each step's update is supervised given the incoming
state as a constant, the standard recipe for recurrent trackers. Everything
runs in float64 numpy; Adam with gradient clipping does the optimization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import (
    LossConfig,
    occlusion_loss,
    occlusion_loss_grads,
    track_loss,
    track_loss_grads,
)
from .scene import MultiViewTracks, QuerySet, Scene, feature_volume, render_ground_truth, sample_queries
from .tracker import ModelWeights, TrackerConfig, _network_backward, run_tracker


@dataclass
class FitResult:
    weights: ModelWeights
    losses: list[float]
    init_tracks: np.ndarray
    final_tracks: np.ndarray
    final_occ_logits: np.ndarray

    @property
    def loss_reduction(self) -> float:
        return self.losses[0] / max(self.losses[-1], 1e-300)


class Adam:
    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def update(self, params: dict, grads: dict) -> None:
        self.step += 1
        bias1 = 1.0 - self.b1**self.step
        bias2 = 1.0 - self.b2**self.step
        for key, g in grads.items():
            self.m[key] = self.b1 * self.m[key] + (1.0 - self.b1) * g
            self.v[key] = self.b2 * self.v[key] + (1.0 - self.b2) * g**2
            mhat = self.m[key] / bias1
            vhat = self.v[key] / bias2
            params[key] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _clip_grads(grads: dict, max_norm: float) -> None:
    total = np.sqrt(sum(float((g**2).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for key in grads:
            grads[key] *= scale


def fit(
    features,
    queries: QuerySet,
    cameras,
    gt: MultiViewTracks,
    config: TrackerConfig,
    loss_config: LossConfig | None = None,
    steps: int = 500,
    lr: float = 3e-3,
    seed: int = 0,
    max_grad_norm: float = 1.0,
) -> FitResult:
    """Optimize randomly initialized weights against one scene's ground
    truth; returns the fitted weights and the loss trace."""
    loss_config = loss_config or LossConfig()
    weights = ModelWeights.random(config, seed=seed)
    optimizer = Adam(weights.params, lr=lr)
    occ_target = (~gt.visibility).astype(np.float64)
    losses = []
    init_tracks = None
    last_states = None

    for _ in range(steps):
        states, caches = run_tracker(features, queries, cameras, weights, config, want_caches=True)
        if init_tracks is None:
            init_tracks = states[0].tracks.copy()
        track_states = [s.tracks for s in states[1:]]
        occ_states = [s.occ_logits for s in states[1:]]
        loss = track_loss(track_states, gt.trajectories, loss_config, gt.in_frame)
        loss += occlusion_loss(occ_states, occ_target, loss_config)
        losses.append(loss)

        tgrads = track_loss_grads(track_states, gt.trajectories, loss_config, gt.in_frame)
        ograds = occlusion_loss_grads(occ_states, occ_target, loss_config)
        grads = {}
        for cache, dt, do in zip(caches, tgrads, ograds):
            ddelta = np.concatenate([dt, do[..., None]], axis=-1)
            ddelta = ddelta.reshape(cache["net_in"].shape[:3] + (3,))
            _network_backward(weights.params, cache, ddelta, config, grads)
        _clip_grads(grads, max_grad_norm)
        optimizer.update(weights.params, grads)
        last_states = states

    return FitResult(
        weights=weights,
        losses=losses,
        init_tracks=init_tracks,
        final_tracks=last_states[-1].tracks,
        final_occ_logits=last_states[-1].occ_logits,
    )


def fit_scene(
    scene: Scene,
    config: TrackerConfig,
    loss_config: LossConfig | None = None,
    steps: int = 500,
    lr: float = 3e-3,
    seed: int = 0,
) -> tuple[FitResult, MultiViewTracks, QuerySet]:
    """Convenience wrapper: derive ground truth, queries and features from a
    scene, then fit."""
    gt = render_ground_truth(scene)
    queries = sample_queries(gt)
    features = feature_volume(scene)
    result = fit(features, queries, scene.cameras, gt, config, loss_config, steps, lr, seed)
    return result, gt, queries
