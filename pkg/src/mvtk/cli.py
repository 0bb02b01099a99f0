"""Command-line entry point: seeded, file-based experiment pipelines.

Subcommands: gen (scene synthesis), track (run the tracker), refine
(triangulation refinement), eval (metric reports and plot data), init-query
(cross-view query initialization) and report (sweep aggregation). Outputs
embed their full config; re-running a command with the same flags writes
byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .baselines import RefineMode, query_init_depth, query_init_feature, triangulation_refine
from .container import container_to_json
from .errors import InvalidConfig, MvtkError
from .fileio import load_features, load_scene, load_tracks, save_scene, save_tracks
from .geometry import RansacParams, sample_views
from .metrics import (
    DEFAULT_THRESHOLDS,
    evaluate,
    evaluate_per_view,
    occlusion_frequency_filter,
)
from .plotting import write_line_plot, write_series
from .scene import (
    MultiViewTracks,
    QuerySet,
    SceneConfig,
    feature_field,
    generate_scene,
    ground_truth_depths,
    render_ground_truth,
    sample_queries,
)
from .tracker import ModelWeights, TrackerConfig, track


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MvtkError as e:
        print(f"ERROR {type(e).__name__}", file=sys.stderr)
        print(str(e), file=sys.stderr)
        return 1
    except OSError as e:
        print("ERROR IOError", file=sys.stderr)
        print(str(e), file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvtk", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(required=True)

    g = sub.add_parser("gen", help="generate a synthetic scene file")
    g.add_argument("--views", type=int, default=4)
    g.add_argument("--frames", type=int, default=16)
    g.add_argument("--points", type=int, default=32)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--radius", type=float, nargs=2, default=(10.0, 12.0), metavar=("LO", "HI"))
    g.add_argument("--angles", type=float, nargs=2, default=(10.0, 45.0), metavar=("LO", "HI"))
    g.add_argument("--image", type=int, nargs=2, default=(48, 64), metavar=("H", "W"))
    g.add_argument("--motion", type=float, default=1.0)
    g.add_argument("--occluders", type=int, default=0)
    g.add_argument("--occluder-radius", type=float, nargs=2, default=(0.3, 0.8))
    g.add_argument("--cluster-size", type=int, default=4)
    g.add_argument("--extent", type=float, default=2.5)
    g.add_argument("--feature-dim", type=int, default=16)
    g.add_argument("--stride", type=int, default=1)
    g.add_argument("--noise", type=float, default=0.02)
    g.add_argument("--query-mode", choices=("first", "random"), default="first")
    g.add_argument("--dump-json", default=None)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("track", help="run the tracker over a scene file")
    t.add_argument("scene")
    t.add_argument("-o", "--output", required=True)
    t.add_argument("--weights", default=None, help="weights file; overrides architecture flags")
    t.add_argument("--weights-seed", type=int, default=0)
    t.add_argument("--mode", choices=("multiview", "flattened"), default="multiview")
    t.add_argument("--m-iters", type=int, default=4)
    t.add_argument("--radius", type=int, default=3)
    t.add_argument("--d", type=int, default=64)
    t.add_argument("--blocks", type=int, default=3)
    t.add_argument("--heads", type=int, default=1)
    t.add_argument("--views", type=int, default=None, help="track a sampled subset of views")
    t.add_argument("--strategy", choices=("nearest", "random", "farthest"), default="farthest")
    t.add_argument("--sample-seed", type=int, default=0)
    t.add_argument("--features", default=None, help="external feature-grid file")
    t.add_argument("--no-camera-embedding", action="store_true")
    t.add_argument("--no-temporal-pe", action="store_true")
    t.add_argument("--dump-json", default=None)
    t.set_defaults(func=cmd_track)

    r = sub.add_parser("refine", help="triangulation-refine a tracks file")
    r.add_argument("tracks")
    r.add_argument("scene")
    r.add_argument("-o", "--output", required=True)
    _add_refine_flags(r, default_when="final")
    r.add_argument("--dump-json", default=None)
    r.set_defaults(func=cmd_refine)

    e = sub.add_parser("eval", help="score a tracks file against its scene")
    e.add_argument("tracks")
    e.add_argument("scene")
    e.add_argument("-o", "--outdir", required=True)
    e.add_argument("--refine", choices=("final", "window"), default=None)
    _add_refine_flags(e, default_when=None, with_when=False)
    e.add_argument("--occ-top", type=float, default=None, help="keep only the most occluded fraction of trajectories")
    e.add_argument("--per-view", action="store_true")
    e.set_defaults(func=cmd_eval)

    q = sub.add_parser("init-query", help="cross-view query initialization")
    q.add_argument("scene")
    q.add_argument("--algo", choices=("feature", "depth"), required=True)
    q.add_argument("--view", type=int, required=True, help="view the query is given in")
    q.add_argument("--point", type=int, required=True, help="scene point index")
    q.add_argument("--restrict-frame", action="store_true", help="search only the query frame")
    q.add_argument("-o", "--output", default=None, help="optional JSON output")
    q.set_defaults(func=cmd_init_query)

    p = sub.add_parser("report", help="aggregate eval records into sweep plots")
    p.add_argument("records_dir")
    p.add_argument("-o", "--outdir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def _add_refine_flags(parser, default_when, with_when=True):
    if with_when:
        parser.add_argument("--when", choices=("final", "window"), default=default_when)
    parser.add_argument("--window", type=int, default=8)
    parser.add_argument("--ransac", action="store_true")
    parser.add_argument("--ransac-threshold", type=float, default=2.0)
    parser.add_argument("--ransac-iters", type=int, default=100)
    parser.add_argument("--ransac-seed", type=int, default=0)
    parser.add_argument("--min-views", type=int, default=2)
    parser.add_argument("--occluded-only", action="store_true")


def cmd_gen(args) -> int:
    config = SceneConfig(
        n_views=args.views,
        n_frames=args.frames,
        n_points=args.points,
        radius_range=tuple(args.radius),
        angle_range_deg=tuple(args.angles),
        image_hw=tuple(args.image),
        motion_amplitude=args.motion,
        n_occluders=args.occluders,
        occluder_radius_range=tuple(args.occluder_radius),
        seed=args.seed,
        cluster_size=args.cluster_size,
        scene_extent=args.extent,
        feature_dim=args.feature_dim,
        feature_stride=args.stride,
        feature_noise=args.noise,
    )
    scene = generate_scene(config)
    gt = render_ground_truth(scene)
    queries = sample_queries(gt, rng=config.seed, mode=args.query_mode)
    save_scene(args.output, scene, gt, queries, query_mode=args.query_mode)
    if args.dump_json:
        _dump_json(args.output, args.dump_json)
    print(
        f"wrote {args.output}: V={config.n_views} T={config.n_frames} N={config.n_points} "
        f"seed={config.seed} radius=[{config.radius_range[0]:g},{config.radius_range[1]:g}] "
        f"angles=[{config.angle_range_deg[0]:g},{config.angle_range_deg[1]:g}]deg"
    )
    return 0


def cmd_track(args) -> int:
    scene, gt, queries = load_scene(args.scene)
    n_views = scene.config.n_views

    if args.weights:
        weights = ModelWeights.load(args.weights)
        config = TrackerConfig(
            m_iters=args.m_iters,
            radius=weights.radius,
            d=weights.d,
            n_blocks=weights.n_blocks,
            heads=weights.heads,
            mode=args.mode,
            use_camera_embedding=not args.no_camera_embedding,
            use_temporal_pe=not args.no_temporal_pe,
        )
        weights_id = f"file:{os.path.basename(args.weights)}"
    else:
        config = TrackerConfig(
            m_iters=args.m_iters,
            radius=args.radius,
            d=args.d,
            n_blocks=args.blocks,
            heads=args.heads,
            mode=args.mode,
            use_camera_embedding=not args.no_camera_embedding,
            use_temporal_pe=not args.no_temporal_pe,
        )
        weights = ModelWeights.random(config, seed=args.weights_seed)
        weights_id = f"seed:{args.weights_seed}"

    if args.views is not None:
        indices = sample_views(scene.cameras, args.views, args.strategy, rng=args.sample_seed)
    else:
        indices = list(range(n_views))

    if args.features:
        all_features = load_features(args.features)
        features = [all_features[v] for v in indices]
    else:
        features = [
            [feature_field(scene, v, t) for t in range(scene.config.n_frames)] for v in indices
        ]
    cameras = [scene.cameras[v] for v in indices]
    sub_queries = QuerySet(t=queries.t[indices], xy=queries.xy[indices])

    tracks, occ_prob = track(features, sub_queries, cameras, weights, config)
    header = {
        "scene": args.scene,
        "weights": weights_id,
        "mode": config.mode,
        "m_iters": config.m_iters,
        "radius": config.radius,
        "d": config.d,
        "n_blocks": config.n_blocks,
        "heads": config.heads,
        "camera_embedding": int(config.use_camera_embedding),
        "temporal_pe": int(config.use_temporal_pe),
        "strategy": args.strategy if args.views is not None else "all",
        "sample_seed": args.sample_seed,
    }
    save_tracks(args.output, tracks, occ_prob, indices, header)
    if args.dump_json:
        _dump_json(args.output, args.dump_json)
    print(f"wrote {args.output}: views={indices} mode={config.mode} weights={weights_id}")
    return 0


def _refine_mode(args, when) -> tuple[RefineMode, RansacParams | None]:
    mode = RefineMode(
        when=when,
        window=args.window,
        use_ransac=args.ransac,
        occluded_only=args.occluded_only,
    )
    ransac = None
    if args.ransac:
        ransac = RansacParams(
            threshold=args.ransac_threshold,
            iterations=args.ransac_iters,
            seed=args.ransac_seed,
        )
    return mode, ransac


def _prediction_tracks(tracks, occ_prob) -> MultiViewTracks:
    pred_visible = ~(occ_prob > 0.5)
    return MultiViewTracks(
        trajectories=tracks,
        visibility=pred_visible,
        in_frame=np.ones_like(pred_visible, dtype=bool),
    )


def cmd_refine(args) -> int:
    tracks, occ_prob, indices, header = load_tracks(args.tracks)
    scene, _, _ = load_scene(args.scene)
    cameras = [scene.cameras[v] for v in indices]
    mode, ransac = _refine_mode(args, args.when)
    refined = triangulation_refine(
        _prediction_tracks(tracks, occ_prob), cameras, mode, args.min_views, ransac
    )
    header = dict(header)
    header.update(
        refined=args.when,
        refine_window=args.window,
        refine_ransac=int(args.ransac),
        refine_min_views=args.min_views,
        refine_occluded_only=int(args.occluded_only),
    )
    header.pop("kind", None)
    header.pop("toolkit_version", None)
    save_tracks(args.output, refined.trajectories, occ_prob, indices, header)
    if args.dump_json:
        _dump_json(args.output, args.dump_json)
    print(f"wrote {args.output}: refine={args.when} ransac={args.ransac}")
    return 0


def cmd_eval(args) -> int:
    tracks, occ_prob, indices, tracks_header = load_tracks(args.tracks)
    scene, gt, queries = load_scene(args.scene)
    sub_gt = MultiViewTracks(
        trajectories=gt.trajectories[indices],
        visibility=gt.visibility[indices],
        in_frame=gt.in_frame[indices],
    )
    sub_queries = QuerySet(t=queries.t[indices], xy=queries.xy[indices])

    refine_echo = "none"
    if args.refine:
        mode, ransac = _refine_mode(args, args.refine)
        cameras = [scene.cameras[v] for v in indices]
        tracks = triangulation_refine(
            _prediction_tracks(tracks, occ_prob), cameras, mode, args.min_views, ransac
        ).trajectories
        refine_echo = f"{args.refine}{'+ransac' if args.ransac else ''}"

    trajectory_mask = None
    if args.occ_top is not None:
        trajectory_mask = occlusion_frequency_filter(sub_gt.visibility, args.occ_top)

    report = evaluate(tracks, occ_prob, sub_gt, sub_queries, trajectory_mask=trajectory_mask)
    os.makedirs(args.outdir, exist_ok=True)
    lines = report.lines()
    for line in lines:
        print(line)
    with open(os.path.join(args.outdir, "report.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")

    record = {
        "kind": "eval",
        "toolkit_version": __version__,
        "tracks_file": args.tracks,
        "scene_file": args.scene,
        "tracks_header": tracks_header,
        "n_views": len(indices),
        "view_indices": [int(v) for v in indices],
        "refine": refine_echo,
        "occ_top": args.occ_top,
        "metrics": report.to_dict(),
    }
    if args.per_view:
        per_view = evaluate_per_view(
            tracks, occ_prob, sub_gt, sub_queries, trajectory_mask=trajectory_mask
        )
        record["per_view"] = [r.to_dict() for r in per_view]
        for vi, r in zip(indices, per_view):
            print(f"view {vi}: delta_avg="
                  f"{'undefined' if r.delta_avg is None else f'{r.delta_avg:.4f}'}")
    with open(os.path.join(args.outdir, "report.json"), "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2)
        f.write("\n")

    write_series(
        os.path.join(args.outdir, "pck_vs_threshold.tsv"),
        {"threshold_px": list(report.thresholds), "pck": list(report.pck)},
    )
    write_line_plot(
        os.path.join(args.outdir, "pck_vs_threshold.svg"),
        list(report.thresholds),
        {"pck": list(report.pck)},
        title="position accuracy vs threshold",
        x_label="threshold (px)",
        y_label="PCK (%)",
    )
    return 0


def cmd_init_query(args) -> int:
    scene, gt, queries = load_scene(args.scene)
    v_q, n_idx = args.view, args.point
    if not 0 <= v_q < scene.config.n_views or not 0 <= n_idx < scene.config.n_points:
        raise InvalidConfig("view or point index out of range")
    t_q = int(queries.t[v_q, n_idx])
    x_q, y_q = queries.xy[v_q, n_idx]
    query = (t_q, x_q, y_q, v_q)

    if args.algo == "feature":
        features = [
            [feature_field(scene, v, t) for t in range(scene.config.n_frames)]
            for v in range(scene.config.n_views)
        ]
        corr = query_init_feature(features, query, restrict_to_query_frame=args.restrict_frame)
    else:
        depth = float(ground_truth_depths(scene)[v_q, t_q, n_idx])
        corr = query_init_depth(depth, scene.cameras, query)

    rows = []
    for vi in range(scene.config.n_views):
        rows.append(
            {
                "view": vi,
                "t": int(corr.t[vi]),
                "x": float(corr.xy[vi, 0]),
                "y": float(corr.xy[vi, 1]),
                "valid": bool(corr.valid[vi]),
            }
        )
        print(
            f"view={vi} t={int(corr.t[vi])} x={corr.xy[vi, 0]:.4f} "
            f"y={corr.xy[vi, 1]:.4f} valid={int(corr.valid[vi])}"
        )
    if args.output:
        doc = {
            "kind": "init-query",
            "toolkit_version": __version__,
            "algo": args.algo,
            "query": {"t": t_q, "x": float(x_q), "y": float(y_q), "view": v_q, "point": n_idx},
            "correspondences": rows,
        }
        with open(args.output, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
    return 0


def cmd_report(args) -> int:
    records = []
    for name in sorted(os.listdir(args.records_dir)):
        if not name.endswith(".json"):
            continue
        with open(os.path.join(args.records_dir, name), encoding="utf-8") as f:
            doc = json.load(f)
        if doc.get("kind") == "eval":
            records.append(doc)
    if not records:
        raise InvalidConfig(f"no eval records found in {args.records_dir}")
    records.sort(key=lambda d: d["n_views"])
    os.makedirs(args.outdir, exist_ok=True)
    views = [d["n_views"] for d in records]
    series = {
        "delta_avg": [d["metrics"]["delta_avg"] for d in records],
        "aj": [d["metrics"]["aj"] for d in records],
        "oa": [d["metrics"]["oa"] for d in records],
    }
    write_series(
        os.path.join(args.outdir, "metric_vs_views.tsv"), {"n_views": views, **series}
    )
    write_line_plot(
        os.path.join(args.outdir, "metric_vs_views.svg"),
        views,
        series,
        title="metrics vs number of views",
        x_label="views",
        y_label="percent",
    )
    print(f"aggregated {len(records)} records into {args.outdir}")
    return 0


def _dump_json(container_path, json_path) -> None:
    with open(json_path, "w", encoding="utf-8") as f:
        f.write(container_to_json(container_path))
        f.write("\n")


if __name__ == "__main__":
    sys.exit(main())
