"""Command-line entry point.

Exit codes: 0 success, 1 pipeline failure (no peduncle, no targets, ...),
2 usage or configuration error. Every command writes into ``--out``.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .camera import facing_row, read_frame, write_frame
from .color import GaussianColorModel, fit_gaussian, rgb_to_rotated_hsv, segment_image
from .config import SCORERS, RunConfig, parse_override, write_default_config
from .detect import detect_peppers, select_target
from .errors import ConfigError, PipelineError
from .geometry import ColorPointCloud, write_ply
from .grasp import rank_grasps, write_grasps_jsonl
from .imageio import read_mask, read_pnm, read_score_map, write_mask, write_score_image, write_score_map
from .metrics import (
    auc,
    best_f1,
    default_thresholds,
    failure_csv,
    harvest_report,
    precision_recall,
    success_table,
    timing_table,
)
from .peduncle import (
    GaussianPeduncleScorer,
    PatchClassifier,
    ScoreMapScorer,
    compute_roi,
    estimate_cutting_pose,
    filter_peduncle_steps,
    peduncle_bbox3,
    train_patch_classifier,
)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class _UsageError(Exception):
    pass


def _overrides(args) -> dict:
    """Table 2 style flags mapped onto config keys (only those given)."""
    o: dict = {}
    pairs = [
        ("color_mu", "color.mu"),
        ("color_sigma", "color.sigma"),
        ("color_threshold", "color.threshold"),
        ("grasp_weights", "grasp.weights"),
        ("angle_threshold", "grasp.angle_threshold"),
        ("patch_size", "grasp.patch_size"),
        ("max_attempts", "grasp.max_attempts"),
        ("h_offset", "peduncle.h_offset"),
        ("threshold", "peduncle.threshold"),
        ("scorer", "peduncle.scorer"),
        ("patch_model", "peduncle.patch_model"),
    ]
    for attr, key in pairs:
        v = getattr(args, attr, None)
        if v is not None:
            o[key] = list(v) if isinstance(v, list) else v
    if args.downsample_radius is not None:
        o["detect.downsample_radius"] = o["peduncle.downsample_radius"] = args.downsample_radius
    if args.pepper_cluster is not None:
        o["detect.cluster_min"], o["detect.cluster_max"] = args.pepper_cluster
    if args.peduncle_cluster is not None:
        o["peduncle.cluster_min"], o["peduncle.cluster_max"] = args.peduncle_cluster
    for text in args.set or ():
        section, key, value = parse_override(text)
        o.setdefault(f"{section}.{key}", value)
    return o


def load_config(args) -> RunConfig:
    return RunConfig.load(args.config, profile=args.profile, overrides=_overrides(args))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _frame_target(frame, cfg: RunConfig, model_path=None):
    model = GaussianColorModel.load(model_path) if model_path else cfg.pepper_model()
    targets = detect_peppers(frame, model, cfg.detect_params())
    return select_target(targets, frame.camera_position), model


# ------------------------------------------------------------------ commands


def cmd_config(args, cfg: RunConfig) -> int:
    out = _out_dir(args)
    write_default_config(out / "default.toml")
    (out / "effective_config.json").write_text(cfg.dumps())
    print(f"wrote {out / 'default.toml'} and {out / 'effective_config.json'}")
    return EXIT_OK


def cmd_train_color(args, cfg: RunConfig) -> int:
    if len(args.images) != len(args.masks):
        raise _UsageError("--images and --masks need the same number of files")
    pixels = []
    for img_path, mask_path in zip(args.images, args.masks):
        img = read_pnm(img_path)
        mask = read_mask(mask_path)
        if img.shape[:2] != mask.shape:
            raise _UsageError(f"{img_path} and {mask_path} differ in size")
        pixels.append(rgb_to_rotated_hsv(img[mask]))
    model = fit_gaussian(np.concatenate(pixels) if pixels else np.zeros((0, 3)))
    out = _out_dir(args)
    model.save(out / "color_model.json")
    print(f"mu={np.round(model.mu, 4).tolist()} sigma={np.round(model.sigma, 5).tolist()} -> {out / 'color_model.json'}")
    return EXIT_OK


def cmd_train_patch(args, cfg: RunConfig) -> int:
    if len(args.images) != len(args.positive):
        raise _UsageError("--images and --positive need the same number of files")
    if args.negative and len(args.negative) != len(args.images):
        raise _UsageError("--negative needs one mask per image when given")
    images = [read_pnm(p) for p in args.images]
    pos = [read_mask(p) for p in args.positive]
    neg = [read_mask(p) for p in args.negative] if args.negative else [~m for m in pos]
    clf = train_patch_classifier(images, pos, neg, max_epochs=args.epochs)
    out = _out_dir(args)
    clf.save(out / "patch_classifier.json")
    print(f"trained for {clf.epochs} epochs -> {out / 'patch_classifier.json'}")
    return EXIT_OK


def cmd_segment(args, cfg: RunConfig) -> int:
    frame = read_frame(args.frame)
    model = GaussianColorModel.load(args.model) if args.model else cfg.pepper_model()
    mask, scores = segment_image(model, frame.rgb, cfg.values["color"]["threshold"])
    targets = detect_peppers(frame, model, cfg.detect_params())
    out = _out_dir(args)
    write_mask(out / "mask.pgm", mask)
    write_score_image(out / "log_likelihood.pgm", scores)
    docs = []
    for i, t in enumerate(targets):
        write_ply(out / f"target_{i}.ply", t.cloud)
        docs.append(
            {
                "index": i,
                "cluster_size": t.cluster_size,
                "centroid": t.centroid.tolist(),
                "bb3": {"min": t.bb3.min.tolist(), "max": t.bb3.max.tolist()},
                "bb2": {"cx": t.bb2.cx, "cy": t.bb2.cy, "width": t.bb2.width, "height": t.bb2.height},
            }
        )
    _write_json(out / "targets.json", docs)
    print(f"{int(mask.sum())} pixels segmented, {len(targets)} targets")
    return EXIT_OK


def _make_scorer(args, cfg: RunConfig):
    name = cfg.values["peduncle"]["scorer"]
    if name == "scoremap":
        if not args.scores:
            raise _UsageError("scorer 'scoremap' needs --scores PATH (16-bit PGM confidence map)")
        return ScoreMapScorer(args.scores)
    if name == "gaussian":
        return GaussianPeduncleScorer(cfg.peduncle_model())
    return PatchClassifier.load(cfg.values["peduncle"]["patch_model"])


def cmd_peduncle(args, cfg: RunConfig) -> int:
    frame = read_frame(args.frame)
    target, model = _frame_target(frame, cfg, args.model)
    roi = compute_roi(target.bb2, frame.shape)
    scores = _make_scorer(args, cfg).score(frame.rgb, roi)
    box = peduncle_bbox3(target.bb3, cfg.values["peduncle"]["h_offset"])
    trace = filter_peduncle_steps(scores, frame, model, box, cfg.filter_params())
    out = _out_dir(args)
    write_score_map(out / "roi_scores.pgm", scores)
    if len(trace.cloud):
        write_ply(out / "peduncle.ply", trace.cloud)
    doc = {
        "roi": {"row0": roi.row0, "row1": roi.row1, "col0": roi.col0, "col1": roi.col1},
        "bbox3": {"min": box.min.tolist(), "max": box.max.tolist()},
        "step_counts": trace.counts,
    }
    _write_json(out / "peduncle.json", doc)  # filter diagnostics survive a NoPeduncle failure
    cut = estimate_cutting_pose(trace.cloud, cfg.values["peduncle"]["cluster_min"])
    doc["cut_pose"] = {
        "position": cut.position.tolist(),
        "orientation": cut.orientation.tolist(),
        "support_count": cut.support_count,
    }
    _write_json(out / "peduncle.json", doc)
    print(f"cut at {np.round(cut.position, 4).tolist()} from {cut.support_count} points")
    return EXIT_OK


def cmd_grasp(args, cfg: RunConfig) -> int:
    frame = read_frame(args.frame)
    target, _ = _frame_target(frame, cfg, args.model)
    g = cfg.values["grasp"]
    ranked = rank_grasps(target, frame.camera_position, g["patch_size"], cfg.grasp_weights(), g["angle_threshold"])
    out = _out_dir(args)
    write_grasps_jsonl(out / "grasps.jsonl", ranked)
    best = ranked[0]
    print(f"{len(ranked)} candidates; best U={best.utility:.4f} at {np.round(best.position, 4).tolist()}")
    return EXIT_OK


def simulate(cfg: RunConfig, seed: int, runs: int = 1):
    """Attempt records for ``runs`` consecutive scene seeds and every configured scenario."""
    from .sim.harvest import run_row
    from .sim.scene import generate_scene

    params = cfg.harvest_params()
    records = []
    for s in range(seed, seed + runs):
        for scenario in cfg.values["sim"]["scenarios"]:
            modified = scenario == "modified"
            scene = generate_scene(cfg.scene_spec(s, modified=modified))
            records += run_row(scene, params, seed=s, modified=modified)
    return records


def cmd_sim(args, cfg: RunConfig) -> int:
    if args.runs < 1:
        raise _UsageError("--runs must be at least 1")
    t0 = time.perf_counter()
    records = simulate(cfg, args.seed, args.runs)
    wall = time.perf_counter() - t0
    out = _out_dir(args)
    (out / "attempts.jsonl").write_text("".join(r.dumps() + "\n" for r in records))
    report = harvest_report(records)
    (out / "report.json").write_text(report.dumps())
    (out / "report.txt").write_text(success_table(report) + "\n" + timing_table(report))
    for name, st in report.scenarios.items():
        (out / f"failures_{name}.csv").write_text(failure_csv(st))
    (out / "config.json").write_text(cfg.dumps())
    # wall-clock compute time is kept apart from the deterministic outputs
    _write_json(out / "runtime.json", {"wall_seconds": wall, "runs": args.runs, "seed": args.seed})
    print(success_table(report), end="")
    return EXIT_OK


def _curve_doc(curve) -> dict:
    t, f1 = best_f1(curve)
    return {"auc": auc(curve), "best_threshold": t, "best_f1": f1}


def cmd_eval(args, cfg: RunConfig) -> int:
    out = _out_dir(args)
    n_thr = cfg.values["eval"]["thresholds"]
    if args.attempts:
        from .sim.harvest import AttemptRecord

        lines = Path(args.attempts).read_text().splitlines()
        records = [AttemptRecord.from_json(json.loads(line)) for line in lines if line.strip()]
        report = harvest_report(records)
        (out / "report.json").write_text(report.dumps())
        (out / "report.txt").write_text(success_table(report) + "\n" + timing_table(report))
        print(success_table(report), end="")
        return EXIT_OK
    if args.scores:
        if len(args.scores) != len(args.truth or ()):
            raise _UsageError("--scores and --truth need the same number of files")
        scores = np.concatenate([read_score_map(p).ravel() for p in args.scores])
        truth = np.concatenate([read_mask(p).ravel() for p in args.truth])
        curve = precision_recall(scores, truth, default_thresholds(scores, n_thr))
        (out / "pr.csv").write_text(curve.to_csv())
        doc = _curve_doc(curve)
        _write_json(out / "eval.json", doc)
        print(f"AUC {doc['auc']:.3f}  best F1 {doc['best_f1']:.3f} at {doc['best_threshold']:.4f}")
        return EXIT_OK
    from .sim.dataset import DATASET_SPEC, compare_filtering, peduncle_dataset

    frames = args.frames or cfg.values["eval"]["dataset_frames"]
    params = cfg.harvest_params()
    samples = peduncle_dataset(frames, args.seed, DATASET_SPEC, params)
    cmp = compare_filtering(samples, params, fine=n_thr)
    (out / "pr_unfiltered.csv").write_text(cmp.unfiltered.to_csv())
    (out / "pr_filtered.csv").write_text(cmp.filtered.to_csv())
    doc = {"frames": len(samples), "unfiltered": _curve_doc(cmp.unfiltered), "filtered": _curve_doc(cmp.filtered)}
    _write_json(out / "eval.json", doc)
    print(
        f"{len(samples)} frames: best F1 unfiltered {doc['unfiltered']['best_f1']:.3f}, "
        f"filtered {doc['filtered']['best_f1']:.3f}"
    )
    return EXIT_OK


def cmd_render(args, cfg: RunConfig) -> int:
    """Export a scene as PLY plus long- and close-range frames with label masks."""
    from .detect import close_range_viewpoint
    from .sim.detector import simulated_score_map
    from .sim.harvest import platform_positions
    from .sim.render import render_rgbd
    from .sim.scene import PEDUNCLE, PEPPER, generate_scene

    params = cfg.harvest_params()
    scene = generate_scene(cfg.scene_spec(args.seed, modified=args.modified))
    out = _out_dir(args)
    write_ply(out / "scene.ply", ColorPointCloud(scene.points, scene.colors))
    for k, px in enumerate(platform_positions(scene.spec.row_length, params.platform_step)):
        pose = facing_row([px, scene.spec.row_y - params.long_range_standoff, params.camera_height])
        frame = render_rgbd(scene, pose, params.intrinsics)
        write_frame(out / f"stop_{k}", frame)
        write_mask(out / f"stop_{k}_pepper.pgm", frame.labels == PEPPER)
    for p in scene.peppers:
        frame = render_rgbd(scene, close_range_viewpoint(p.center, params.standoff, params.vertical_offset),
                            params.intrinsics)
        stem = out / f"pepper_{p.id}"
        write_frame(stem, frame)
        write_mask(f"{stem}_pepper.pgm", (frame.labels == PEPPER) & (frame.instances == p.id))
        write_mask(f"{stem}_peduncle.pgm", frame.labels == PEDUNCLE)
        write_score_map(f"{stem}_scores.pgm", simulated_score_map(frame, args.seed))
    _write_json(
        out / "peppers.json",
        [
            {"id": p.id, "center": p.center.tolist(), "peduncle_centroid": p.peduncle_centroid.tolist()}
            for p in scene.peppers
        ],
    )
    print(f"scene {args.seed}: {len(scene.points)} points, {len(scene.peppers)} peppers -> {out}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", metavar="PATH", help="TOML run configuration")
    g.add_argument("--profile", metavar="NAME", help="named profile, e.g. paper_defaults")
    g.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override any config key (repeatable)")
    g.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    g.add_argument("--seed", type=int, default=0, metavar="U64")
    g.add_argument("--scorer", choices=SCORERS, help="peduncle pixel scorer")
    g.add_argument("--threshold", type=float, metavar="F", help="peduncle score threshold (filter step 1)")
    g.add_argument("--patch-model", metavar="PATH", help="trained patch classifier JSON")
    t = p.add_argument_group("parameter-table overrides")
    t.add_argument("--color-mu", type=float, nargs=3, metavar=("H", "S", "V"))
    t.add_argument("--color-sigma", type=float, nargs=3, metavar=("VH", "VS", "VV"))
    t.add_argument("--color-threshold", type=float, metavar="LL")
    t.add_argument("--pepper-cluster", type=int, nargs=2, metavar=("MIN", "MAX"))
    t.add_argument("--peduncle-cluster", type=int, nargs=2, metavar=("MIN", "MAX"))
    t.add_argument("--downsample-radius", type=float, metavar="M")
    t.add_argument("--grasp-weights", type=float, nargs=3, metavar=("W1", "W2", "W3"))
    t.add_argument("--angle-threshold", type=float, metavar="RAD")
    t.add_argument("--patch-size", type=float, metavar="M")
    t.add_argument("--h-offset", type=float, metavar="M")
    t.add_argument("--max-attempts", type=int, metavar="N")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="pepperharvest", description="Sweet-pepper detection, peduncle localization, grasp ranking and harvest simulation."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=func)
        return p

    add("config", cmd_config, "write the default TOML and the effective configuration")
    p = add("train-color", cmd_train_color, "fit the pepper color Gaussian from images and masks")
    p.add_argument("--images", nargs="+", required=True, metavar="PPM")
    p.add_argument("--masks", nargs="+", required=True, metavar="PGM")
    p = add("train-patch", cmd_train_patch, "train the per-pixel peduncle classifier")
    p.add_argument("--images", nargs="+", required=True, metavar="PPM")
    p.add_argument("--positive", nargs="+", required=True, metavar="PGM")
    p.add_argument("--negative", nargs="+", metavar="PGM", help="default: complement of the positive mask")
    p.add_argument("--epochs", type=int, default=500)
    for name, func, help_ in (
        ("segment", cmd_segment, "segment and cluster peppers in one RGB-D frame"),
        ("peduncle", cmd_peduncle, "localize the peduncle and cutting pose of the selected pepper"),
        ("grasp", cmd_grasp, "rank grasp candidates on the selected pepper"),
    ):
        p = add(name, func, help_)
        p.add_argument("--frame", required=True, metavar="STEM", help="frame stem (STEM.ppm, STEM.pgm, STEM.json)")
        p.add_argument("--model", metavar="JSON", help="pepper color model (default: from config)")
        if name == "peduncle":
            p.add_argument("--scores", metavar="PGM", help="peduncle confidence map for the scoremap scorer")
    p = add("sim", cmd_sim, "simulate harvesting rows and write attempts.jsonl and report.json")
    p.add_argument("--runs", type=int, default=1, metavar="N", help="number of consecutive scene seeds")
    p = add("eval", cmd_eval, "PR/AUC/F1 evaluation, or a report from an attempts file")
    p.add_argument("--attempts", metavar="JSONL", help="rebuild the harvest report from attempt records")
    p.add_argument("--scores", nargs="+", metavar="PGM", help="confidence maps to evaluate")
    p.add_argument("--truth", nargs="+", metavar="PGM", help="ground-truth masks for --scores")
    p.add_argument("--frames", type=int, metavar="N", help="simulated peduncle dataset size")
    p = add("render", cmd_render, "export a simulated scene (PLY) and its frames (PPM/PGM)")
    p.add_argument("--modified", action="store_true", help="remove occluding leaves")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help / --version exit 0, usage errors exit 2
        return int(exc.code or 0)
    try:
        cfg = load_config(args)
        return args.func(args, cfg)
    except (ConfigError, _UsageError) as exc:
        print(f"pepperharvest {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:  # unreadable inputs
        print(f"pepperharvest {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PipelineError, ValueError) as exc:
        print(f"pepperharvest {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def run(argv=None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
