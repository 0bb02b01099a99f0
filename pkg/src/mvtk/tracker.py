"""Multi-view tracker: correlation tokens, camera conditioning, axis-wise
attention and recurrent trajectory/occlusion refinement.

Each refinement step rebuilds local correlation around the current hypothesis,
projects it (with the encoded offset from the query) into tokens, adds the
Plucker-ray camera embedding and temporal position code, and runs a stack of
attention blocks that alternate over the time, point and view axes. The
network output is an additive update to the pixel tracks and occlusion
logits.

``flattened`` mode realizes the naive single-sequence baseline: views and
frames are concatenated into one time axis and no view attention is applied.
With a single view it coincides exactly with multiview mode, which likewise
skips view attention there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .container import read_container, write_container
from .correlation import (
    POS_ENCODING_DIM,
    cosine_pairs,
    fourier_features,
    patch_offsets,
    sample_grid,
)
from .embedding import plucker_embedding, ray_field, sinusoidal_pe
from .errors import DimensionMismatch, InvalidConfig, IterationOverflow
from .geometry import Camera
from .scene import QuerySet

AXES = ("time", "space", "view")


@dataclass
class TrackerConfig:
    m_iters: int = 4
    radius: int = 3  # correlation neighborhood radius, both sides
    d: int = 64
    n_blocks: int = 3
    heads: int = 1
    mode: str = "multiview"  # or "flattened"
    use_camera_embedding: bool = True
    use_temporal_pe: bool = True

    def __post_init__(self):
        if self.m_iters < 1:
            raise InvalidConfig("m_iters must be >= 1")
        if self.radius < 0:
            raise InvalidConfig("radius must be >= 0")
        if self.d % self.heads:
            raise InvalidConfig("d must be divisible by heads")
        if self.mode not in ("multiview", "flattened"):
            raise InvalidConfig(f"unknown mode {self.mode!r}")

    @property
    def corr_len(self) -> int:
        k = (2 * self.radius + 1) ** 2
        return k * k

    @property
    def token_in_dim(self) -> int:
        return self.corr_len + POS_ENCODING_DIM


@dataclass
class TrackerState:
    """Hypothesis after ``m`` refinement steps: pixel tracks (V, T, N, 2)
    and occlusion logits (V, T, N)."""

    tracks: np.ndarray
    occ_logits: np.ndarray
    m: int = 0


class ModelWeights:
    """All learned parameters as a flat name -> float64 array mapping.

    Shapes derive from (d, radius, n_blocks, heads); save/load round-trips
    bit-exactly through the MVTK container.
    """

    def __init__(self, params: dict, d: int, radius: int, n_blocks: int, heads: int):
        self.params = params
        self.d = d
        self.radius = radius
        self.n_blocks = n_blocks
        self.heads = heads

    @staticmethod
    def shape_table(d: int, radius: int, n_blocks: int) -> dict:
        k = (2 * radius + 1) ** 2
        shapes = {
            "token_proj.w": (k * k + POS_ENCODING_DIM, d),
            "token_proj.b": (d,),
            "plucker.w1": (6, 2 * d),
            "plucker.b1": (2 * d,),
            "plucker.w2": (2 * d, d),
            "plucker.b2": (d,),
        }
        for blk in range(n_blocks):
            for axis in AXES:
                pre = f"block{blk}.{axis}"
                shapes[f"{pre}.ln1.g"] = (d,)
                shapes[f"{pre}.ln1.b"] = (d,)
                for mat in ("wq", "wk", "wv", "wo"):
                    shapes[f"{pre}.attn.{mat}"] = (d, d)
                for vec in ("bq", "bk", "bv", "bo"):
                    shapes[f"{pre}.attn.{vec}"] = (d,)
                shapes[f"{pre}.ln2.g"] = (d,)
                shapes[f"{pre}.ln2.b"] = (d,)
                shapes[f"{pre}.ff.w1"] = (d, 4 * d)
                shapes[f"{pre}.ff.b1"] = (4 * d,)
                shapes[f"{pre}.ff.w2"] = (4 * d, d)
                shapes[f"{pre}.ff.b2"] = (d,)
        shapes["head.w"] = (d, 3)
        shapes["head.b"] = (3,)
        return shapes

    @classmethod
    def random(cls, config: TrackerConfig, seed: int = 0) -> "ModelWeights":
        rng = np.random.default_rng([int(seed), 41])
        params = {}
        for name, shape in cls.shape_table(config.d, config.radius, config.n_blocks).items():
            leaf = name.rsplit(".", 1)[-1]
            if leaf in ("g",):
                params[name] = np.ones(shape)
            elif leaf.startswith("b"):
                params[name] = np.zeros(shape)
            else:
                scale = 1.0 / np.sqrt(shape[0])
                if name == "head.w":
                    scale *= 0.01  # start close to the identity refinement
                params[name] = rng.normal(scale=scale, size=shape)
        return cls(params, config.d, config.radius, config.n_blocks, config.heads)

    @classmethod
    def zeros(cls, config: TrackerConfig) -> "ModelWeights":
        params = {}
        for name, shape in cls.shape_table(config.d, config.radius, config.n_blocks).items():
            params[name] = np.zeros(shape)
        return cls(params, config.d, config.radius, config.n_blocks, config.heads)

    def copy(self) -> "ModelWeights":
        return ModelWeights(
            {k: v.copy() for k, v in self.params.items()},
            self.d,
            self.radius,
            self.n_blocks,
            self.heads,
        )

    def save(self, path, extra_header: dict | None = None) -> None:
        header = {
            "kind": "weights",
            "d": self.d,
            "radius": self.radius,
            "n_blocks": self.n_blocks,
            "heads": self.heads,
        }
        header.update(extra_header or {})
        write_container(path, header, self.params)

    @classmethod
    def load(cls, path) -> "ModelWeights":
        header, arrays = read_container(path)
        if header.get("kind") != "weights":
            raise InvalidConfig(f"{path} is not a weights file")
        return cls(
            arrays,
            d=int(header["d"]),
            radius=int(header["radius"]),
            n_blocks=int(header["n_blocks"]),
            heads=int(header["heads"]),
        )

    def check_config(self, config: TrackerConfig) -> None:
        if (self.d, self.radius, self.n_blocks, self.heads) != (
            config.d,
            config.radius,
            config.n_blocks,
            config.heads,
        ):
            raise DimensionMismatch(
                "weights were built for "
                f"d={self.d} r={self.radius} L={self.n_blocks} h={self.heads}, "
                f"config wants d={config.d} r={config.radius} "
                f"L={config.n_blocks} h={config.heads}"
            )


def init_state(queries: QuerySet, n_frames: int) -> TrackerState:
    """Broadcast each query position over all frames; occlusion logits start
    at zero (probability one half)."""
    v, n = queries.t.shape
    tracks = np.broadcast_to(queries.xy[:, None, :, :], (v, n_frames, n, 2)).copy()
    return TrackerState(tracks=tracks, occ_logits=np.zeros((v, n_frames, n)), m=0)


_AXIS_MOVES = {
    "time": (lambda x: x.transpose(0, 2, 1, 3), lambda x: x.transpose(0, 2, 1, 3)),
    "points": (lambda x: x, lambda x: x),
    "views": (lambda x: x.transpose(1, 2, 0, 3), lambda x: x.transpose(2, 0, 1, 3)),
}


def _axis_attention(x, axis, params, prefix, heads, want_cache=False):
    if axis not in _AXIS_MOVES:
        raise InvalidConfig(f"unknown attention axis {axis!r}")
    fwd, _ = _AXIS_MOVES[axis]
    moved = fwd(x)
    batched = moved.reshape(-1, moved.shape[2], moved.shape[3])
    out, cache = nn.attention_unit(batched, params, prefix, heads, want_cache)
    out = out.reshape(moved.shape)
    _, back = _AXIS_MOVES[axis]
    return back(out), (cache, moved.shape)


def _axis_attention_backward(dy, axis, cache_and_shape, params, prefix, heads, grads):
    cache, moved_shape = cache_and_shape
    fwd, _ = _AXIS_MOVES[axis]
    dmoved = fwd(dy).reshape(-1, moved_shape[2], moved_shape[3])
    dx = nn.attention_unit_backward(dmoved, cache, params, prefix, heads, grads)
    dx = dx.reshape(moved_shape)
    _, back = _AXIS_MOVES[axis]
    return back(dx)


def axis_attention(x: np.ndarray, axis: str, weights, prefix: str = "block0.time", heads: int = 1) -> np.ndarray:
    """One attention-plus-feed-forward unit along a chosen axis of the
    (V, T, N, d) token field; the other axes batch."""
    params = weights.params if isinstance(weights, ModelWeights) else weights
    out, _ = _axis_attention(x, axis, params, prefix, heads)
    return out


def _network_forward(params, net_in, rays, pe, config: TrackerConfig, n_views: int, want_cache=False):
    """Token projection, conditioning, attention stack and update head.

    ``net_in`` is (V', T', N, corr+pos), ``rays`` (V', T', N, 6), ``pe``
    (T', d); in flattened mode the caller has already merged views into the
    time axis (V' == 1). Returns (V', T', N, 3) updates.
    """
    cache = {"units": []} if want_cache else None
    tokens = net_in @ params["token_proj.w"] + params["token_proj.b"]
    if config.use_camera_embedding:
        z1 = rays @ params["plucker.w1"] + params["plucker.b1"]
        h1 = nn.gelu(z1)
        tokens = tokens + h1 @ params["plucker.w2"] + params["plucker.b2"]
        if want_cache:
            cache["plucker"] = (z1, h1)
    if config.use_temporal_pe:
        tokens = tokens + pe[None, :, None, :]

    use_view_attention = config.mode == "multiview" and n_views > 1
    axes = ("time", "points", "views") if use_view_attention else ("time", "points")
    names = {"time": "time", "points": "space", "views": "view"}
    for blk in range(config.n_blocks):
        for axis in axes:
            prefix = f"block{blk}.{names[axis]}"
            tokens, unit_cache = _axis_attention(
                tokens, axis, params, prefix, config.heads, want_cache
            )
            if want_cache:
                cache["units"].append((axis, prefix, unit_cache, tokens.shape))
    delta = tokens @ params["head.w"] + params["head.b"]
    if want_cache:
        cache["net_in"] = net_in
        cache["rays"] = rays
        cache["tokens_final"] = tokens
        cache["axes"] = axes
    return delta, cache


def _network_backward(params, cache, ddelta, config: TrackerConfig, grads: dict):
    """Accumulate parameter gradients for one refinement step given the
    gradient on the (V', T', N, 3) update output."""
    tokens_final = cache["tokens_final"]
    dtokens, dw, db = nn.linear_backward(ddelta, tokens_final, params["head.w"])
    _acc(grads, "head.w", dw)
    _acc(grads, "head.b", db)

    for axis, prefix, unit_cache, _shape in reversed(cache["units"]):
        dtokens = _axis_attention_backward(
            dtokens, axis, unit_cache, params, prefix, config.heads, grads
        )

    # position code is weight-free; the camera branch and token projection
    # both receive the full token gradient
    if config.use_camera_embedding:
        z1, h1 = cache["plucker"]
        dh1, dw2, db2 = nn.linear_backward(dtokens, h1, params["plucker.w2"])
        _acc(grads, "plucker.w2", dw2)
        _acc(grads, "plucker.b2", db2)
        dz1 = dh1 * nn.gelu_grad(z1)
        _, dw1, db1 = nn.linear_backward(dz1, cache["rays"], params["plucker.w1"])
        _acc(grads, "plucker.w1", dw1)
        _acc(grads, "plucker.b1", db1)

    _, dwt, dbt = nn.linear_backward(dtokens, cache["net_in"], params["token_proj.w"])
    _acc(grads, "token_proj.w", dwt)
    _acc(grads, "token_proj.b", dbt)


def _acc(grads: dict, name: str, value: np.ndarray) -> None:
    if name in grads:
        grads[name] += value
    else:
        grads[name] = value


def _token_inputs(tracks, features, queries: QuerySet, config: TrackerConfig):
    """Raw network inputs at the current hypothesis: flattened correlation
    concatenated with the encoded offset from the query, per (v, t, n)."""
    v, t, n, _ = tracks.shape
    offs = patch_offsets(config.radius)  # (K, 2) in grid steps
    k = offs.shape[0]
    net_in = np.empty((v, t, n, config.token_in_dim))
    for vi in range(v):
        stride = features[vi][0].stride
        qmaps = [features[vi][int(queries.t[vi, ni])] for ni in range(n)]
        qpatch = np.stack(
            [
                sample_grid(qmaps[ni].grid, queries.xy[vi, ni] / stride + offs)
                for ni in range(n)
            ]
        )  # (N, K, C)
        for ti in range(t):
            grid = features[vi][ti].grid
            ppatch = sample_grid(grid, tracks[vi, ti][:, None, :] / stride + offs[None])
            corr = cosine_pairs(ppatch, qpatch).reshape(n, k * k)
            pos = fourier_features(tracks[vi, ti] - queries.xy[vi])
            net_in[vi, ti] = np.concatenate([corr, pos], axis=1)
    return net_in


def _refine_forward(state, features, queries, cameras, weights, config, want_cache=False):
    if state.m >= config.m_iters:
        raise IterationOverflow(f"state already at m={state.m} of {config.m_iters}")
    weights.check_config(config)
    v, t, n, _ = state.tracks.shape

    net_in = _token_inputs(state.tracks, features, queries, config)
    rays = ray_field(cameras, state.tracks).rays if config.use_camera_embedding else np.zeros(
        (v, t, n, 6)
    )
    if config.mode == "flattened":
        net_in = net_in.reshape(1, v * t, n, -1)
        rays = rays.reshape(1, v * t, n, 6)
        pe = sinusoidal_pe(np.arange(v * t), config.d)
    else:
        pe = sinusoidal_pe(np.arange(t), config.d)

    delta, cache = _network_forward(
        weights.params, net_in, rays, pe, config, n_views=v, want_cache=want_cache
    )
    delta = delta.reshape(v, t, n, 3)
    new_state = TrackerState(
        tracks=state.tracks + delta[..., :2],
        occ_logits=state.occ_logits + delta[..., 2],
        m=state.m + 1,
    )
    return new_state, cache


def refine_step(
    state: TrackerState,
    features,
    queries: QuerySet,
    cameras: list[Camera],
    weights: ModelWeights,
    config: TrackerConfig,
) -> TrackerState:
    """One recurrent update: correlation at the current hypothesis, token
    assembly, the attention stack, and an additive (dx, dy, d-logit) per
    track point."""
    new_state, _ = _refine_forward(state, features, queries, cameras, weights, config)
    return new_state


def run_tracker(features, queries, cameras, weights, config, want_caches=False):
    """All intermediate states (index 0 is the initialization) plus network
    caches when requested; used by both inference and the fitting harness."""
    n_frames = len(features[0])
    states = [init_state(queries, n_frames)]
    caches = []
    for _ in range(config.m_iters):
        new_state, cache = _refine_forward(
            states[-1], features, queries, cameras, weights, config, want_cache=want_caches
        )
        states.append(new_state)
        caches.append(cache)
    return states, caches


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def track(
    features,
    queries: QuerySet,
    cameras: list[Camera],
    weights: ModelWeights,
    config: TrackerConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Full forward pass: returns final pixel tracks (V, T, N, 2) and
    occlusion probabilities (V, T, N); occluded means probability > 0.5."""
    states, _ = run_tracker(features, queries, cameras, weights, config)
    final = states[-1]
    return final.tracks, sigmoid(final.occ_logits)
