"""TAP-Vid style evaluation: threshold position accuracy, occlusion accuracy,
average Jaccard, the in-frame-occlusion accuracy variant, and the
occlusion-frequency trajectory filter.

All fractions are percentages pooled over (view, frame, point). Subsets that
turn out empty report ``None`` rather than a NaN. Query frames are excluded
by the report builder when a query set is supplied, matching the standard
protocol of scoring only non-anchor frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, ShapeMismatch
from .scene import MultiViewTracks, QuerySet

DEFAULT_THRESHOLDS = (1.0, 2.0, 4.0, 8.0, 16.0)
OCCLUDED_ABOVE = 0.5  # probability > 0.5 means predicted occluded


def _check(pred_tracks, gt_tracks, gt_visibility):
    pred_tracks = np.asarray(pred_tracks, dtype=np.float64)
    gt_tracks = np.asarray(gt_tracks, dtype=np.float64)
    gt_visibility = np.asarray(gt_visibility, dtype=bool)
    if pred_tracks.shape != gt_tracks.shape:
        raise ShapeMismatch(f"pred {pred_tracks.shape} vs gt {gt_tracks.shape}")
    if gt_visibility.shape != gt_tracks.shape[:-1]:
        raise ShapeMismatch(f"visibility {gt_visibility.shape} vs tracks {gt_tracks.shape}")
    return pred_tracks, gt_tracks, gt_visibility


def _subset_mask(gt_visibility, subset, in_frame):
    if subset == "visible":
        return gt_visibility
    if subset == "in_frame_occluded":
        if in_frame is None:
            raise InvalidConfig("in_frame mask required for the occluded subset")
        return np.asarray(in_frame, dtype=bool) & ~gt_visibility
    raise InvalidConfig(f"unknown subset {subset!r}")


def position_accuracy(
    pred_tracks,
    gt_tracks,
    gt_visibility,
    subset: str = "visible",
    thresholds=DEFAULT_THRESHOLDS,
    in_frame=None,
    eval_mask=None,
) -> list:
    """Per-threshold percentage of subset points within tau pixels of ground
    truth; ``None`` per threshold when the subset is empty."""
    pred_tracks, gt_tracks, gt_visibility = _check(pred_tracks, gt_tracks, gt_visibility)
    if list(thresholds) != sorted(thresholds) or min(thresholds) <= 0:
        raise InvalidConfig("thresholds must be positive ascending")
    mask = _subset_mask(gt_visibility, subset, in_frame)
    if eval_mask is not None:
        mask = mask & np.asarray(eval_mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        return [None for _ in thresholds]
    err = np.linalg.norm(pred_tracks - gt_tracks, axis=-1)[mask]
    return [float((err <= tau).mean() * 100.0) for tau in thresholds]


def occlusion_accuracy(pred_occ_prob, gt_visibility, eval_mask=None):
    """Percentage of points whose binary occlusion call (probability > 0.5)
    matches the ground truth, over all points."""
    pred_occ_prob = np.asarray(pred_occ_prob, dtype=np.float64)
    gt_visibility = np.asarray(gt_visibility, dtype=bool)
    if pred_occ_prob.shape != gt_visibility.shape:
        raise ShapeMismatch(f"occ {pred_occ_prob.shape} vs visibility {gt_visibility.shape}")
    mask = (
        np.ones_like(gt_visibility) if eval_mask is None else np.asarray(eval_mask, dtype=bool)
    )
    count = int(mask.sum())
    if count == 0:
        return None
    pred_occluded = pred_occ_prob > OCCLUDED_ABOVE
    return float((pred_occluded[mask] == ~gt_visibility[mask]).mean() * 100.0)


def average_jaccard(
    pred_tracks,
    pred_occ_prob,
    gt_tracks,
    gt_visibility,
    thresholds=DEFAULT_THRESHOLDS,
    eval_mask=None,
):
    """Threshold-averaged Jaccard of jointly-correct position and visibility.

    Per threshold: true positives are predicted-visible, ground-truth-visible
    points within tau; false positives are predicted-visible points that are
    occluded or off target; false negatives are ground-truth-visible points
    that are predicted occluded or off target.
    """
    pred_tracks, gt_tracks, gt_visibility = _check(pred_tracks, gt_tracks, gt_visibility)
    pred_occ_prob = np.asarray(pred_occ_prob, dtype=np.float64)
    if pred_occ_prob.shape != gt_visibility.shape:
        raise ShapeMismatch(f"occ {pred_occ_prob.shape} vs visibility {gt_visibility.shape}")
    mask = (
        np.ones_like(gt_visibility) if eval_mask is None else np.asarray(eval_mask, dtype=bool)
    )
    err = np.linalg.norm(pred_tracks - gt_tracks, axis=-1)
    pred_visible = ~(pred_occ_prob > OCCLUDED_ABOVE)
    visible = gt_visibility
    jaccards = []
    for tau in thresholds:
        within = err <= tau
        tp = int((pred_visible & visible & within & mask).sum())
        fp = int((pred_visible & ~(visible & within) & mask).sum())
        fn = int((visible & ~(pred_visible & within) & mask).sum())
        denom = tp + fp + fn
        if denom == 0:
            return None
        jaccards.append(tp / denom)
    return float(np.mean(jaccards) * 100.0)


def occlusion_frequency_filter(gt_visibility, top_fraction: float) -> np.ndarray:
    """Mask of the ceil(fraction * V * N) trajectories with the most
    visibility transitions; ties resolve toward lower (view, point)."""
    if not 0.0 < top_fraction <= 1.0:
        raise InvalidConfig("top_fraction must be in (0, 1]")
    gt_visibility = np.asarray(gt_visibility, dtype=bool)
    v, _, n = gt_visibility.shape
    freq = np.abs(np.diff(gt_visibility.astype(np.int64), axis=1)).sum(axis=1)  # (V, N)
    k = int(np.ceil(top_fraction * v * n))
    order = np.lexsort(
        (np.tile(np.arange(n), v), np.repeat(np.arange(v), n), -freq.ravel())
    )
    mask = np.zeros(v * n, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(v, n)


@dataclass
class EvalReport:
    """Pooled metric bundle; percentages, or None for empty subsets."""

    thresholds: tuple
    pck: tuple  # per-threshold accuracy on visible points
    delta_avg: float | None
    delta_occ: float | None  # mean accuracy on in-frame occluded points
    oa: float | None
    aj: float | None
    n_visible: int
    n_in_frame_occluded: int
    n_evaluated: int

    def lines(self) -> list[str]:
        def fmt(x):
            return "undefined" if x is None else f"{x:.4f}"

        out = [f"pck@{tau:g}px {fmt(p)}" for tau, p in zip(self.thresholds, self.pck)]
        out.append(f"delta_avg {fmt(self.delta_avg)}")
        out.append(f"delta_occ {fmt(self.delta_occ)}")
        out.append(f"occlusion_accuracy {fmt(self.oa)}")
        out.append(f"average_jaccard {fmt(self.aj)}")
        out.append(f"n_visible {self.n_visible}")
        out.append(f"n_in_frame_occluded {self.n_in_frame_occluded}")
        out.append(f"n_evaluated {self.n_evaluated}")
        return out

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "pck": list(self.pck),
            "delta_avg": self.delta_avg,
            "delta_occ": self.delta_occ,
            "oa": self.oa,
            "aj": self.aj,
            "n_visible": self.n_visible,
            "n_in_frame_occluded": self.n_in_frame_occluded,
            "n_evaluated": self.n_evaluated,
        }


def evaluation_mask(
    shape: tuple,
    queries: QuerySet | None = None,
    trajectory_mask=None,
) -> np.ndarray:
    """(V, T, N) mask of scored entries: query frames drop out, and an
    optional per-(view, point) trajectory filter applies across time."""
    v, t, n = shape
    mask = np.ones((v, t, n), dtype=bool)
    if queries is not None:
        for vi in range(v):
            mask[vi, queries.t[vi], np.arange(n)] = False
    if trajectory_mask is not None:
        mask &= np.asarray(trajectory_mask, dtype=bool)[:, None, :]
    return mask


def evaluate(
    pred_tracks,
    pred_occ_prob,
    gt: MultiViewTracks,
    queries: QuerySet | None = None,
    thresholds=DEFAULT_THRESHOLDS,
    trajectory_mask=None,
) -> EvalReport:
    """Assemble the full report for one prediction against ground truth."""
    mask = evaluation_mask(gt.shape, queries, trajectory_mask)
    pck = position_accuracy(
        pred_tracks, gt.trajectories, gt.visibility, "visible", thresholds, eval_mask=mask
    )
    pck_occ = position_accuracy(
        pred_tracks,
        gt.trajectories,
        gt.visibility,
        "in_frame_occluded",
        thresholds,
        in_frame=gt.in_frame,
        eval_mask=mask,
    )
    delta_avg = None if any(p is None for p in pck) else float(np.mean(pck))
    delta_occ = None if any(p is None for p in pck_occ) else float(np.mean(pck_occ))
    return EvalReport(
        thresholds=tuple(thresholds),
        pck=tuple(pck),
        delta_avg=delta_avg,
        delta_occ=delta_occ,
        oa=occlusion_accuracy(pred_occ_prob, gt.visibility, eval_mask=mask),
        aj=average_jaccard(
            pred_tracks, pred_occ_prob, gt.trajectories, gt.visibility, thresholds, eval_mask=mask
        ),
        n_visible=int((gt.visibility & mask).sum()),
        n_in_frame_occluded=int((gt.in_frame & ~gt.visibility & mask).sum()),
        n_evaluated=int(mask.sum()),
    )


def evaluate_per_view(
    pred_tracks,
    pred_occ_prob,
    gt: MultiViewTracks,
    queries: QuerySet | None = None,
    thresholds=DEFAULT_THRESHOLDS,
    trajectory_mask=None,
) -> list[EvalReport]:
    """Macro variant: one report per view, for comparison against pooling."""
    reports = []
    n_views = gt.shape[0]
    for vi in range(n_views):
        view_gt = MultiViewTracks(
            trajectories=gt.trajectories[vi : vi + 1],
            visibility=gt.visibility[vi : vi + 1],
            in_frame=gt.in_frame[vi : vi + 1],
        )
        view_queries = None
        if queries is not None:
            view_queries = QuerySet(t=queries.t[vi : vi + 1], xy=queries.xy[vi : vi + 1])
        view_traj_mask = None if trajectory_mask is None else trajectory_mask[vi : vi + 1]
        reports.append(
            evaluate(
                np.asarray(pred_tracks)[vi : vi + 1],
                np.asarray(pred_occ_prob)[vi : vi + 1],
                view_gt,
                view_queries,
                thresholds,
                view_traj_mask,
            )
        )
    return reports
