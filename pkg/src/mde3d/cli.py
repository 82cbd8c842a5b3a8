"""Command-line front end: convert, sample-mask, eval-depth, eval-det, rank."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import re
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import depth_metrics, detection_eval, kitti_io, reference
from .errors import (
    AlignmentError,
    EmptyEvaluationError,
    FormatError,
    Mde3dError,
    MetricLookupError,
    ShapeError,
    ValidationError,
)
from .pseudolidar import (
    KITTI_BEAMS,
    KITTI_D_MAX,
    KITTI_H_MAX,
    KITTI_H_RES_DEG,
    KITTI_R_MIN_FRAC,
    LidarSamplingSpec,
    build_sample_mask,
    dense_cloud,
    sampled_cloud,
)
from .ranking import MetricTable, concordance_report, render_diagram

log = logging.getLogger("mde3d")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_ALIGNMENT = 4
EXIT_PARTIAL = 5
EXIT_EMPTY = 6


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(doc: dict, out: str | None) -> None:
    text = _dump(doc)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _fan_out(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map; results never depend on ``jobs``."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _frame_ids(split: str | None, directory: str, suffix: str) -> list[str]:
    if split:
        return kitti_io.parse_split(Path(split).read_text())
    return sorted(p.stem for p in Path(directory).glob(f"*{suffix}"))


# -- convert ---------------------------------------------------------------


def _spec_from_args(args) -> LidarSamplingSpec:
    def pick(v, default):
        return default if v is None else v

    return LidarSamplingSpec(
        n_beams=args.beams,
        h_res=math.radians(args.h_res),
        d_max=pick(args.d_max, KITTI_D_MAX),
        h_max=pick(args.h_max, KITTI_H_MAX),
        r_min_frac=pick(args.r_min_frac, KITTI_R_MIN_FRAC),
        v_fov=None if args.v_fov is None else math.radians(args.v_fov),
        h_fov=None if args.h_fov is None else math.radians(args.h_fov),
        clamp_v_fov=args.clamp_v_fov,
    )


def _convert_frame(task: tuple) -> dict:
    fid, depth_dir, calib_dir, out_dir, mode, spec, dense_bounds, lidar_frame = task
    try:
        depth = kitti_io.read_depth_image((Path(depth_dir) / f"{fid}.png").read_bytes())
        calib_text = (Path(calib_dir) / f"{fid}.txt").read_text()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            k = kitti_io.parse_calib(calib_text, width=depth.width, height=depth.height)
        if mode == "dense":
            cloud = dense_cloud(depth, k, **dense_bounds)
        else:
            cloud = sampled_cloud(depth, k, spec)
        if lidar_frame:
            cloud = kitti_io.camera_to_velo(cloud, kitti_io.parse_calib_matrices(calib_text))
        blob = kitti_io.write_pointcloud(cloud)
    except (OSError, Mde3dError, ValueError) as exc:
        return {"id": fid, "error": f"{type(exc).__name__}: {exc}"}
    (Path(out_dir) / f"{fid}.bin").write_bytes(blob)
    return {"id": fid, "points": len(cloud), "sha256": hashlib.sha256(blob).hexdigest()}


def cmd_convert(args) -> int:
    spec = _spec_from_args(args)
    ids = _frame_ids(args.split, args.depth_dir, ".png")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dense_bounds = {"d_max": args.d_max, "h_max": args.h_max, "r_min_frac": args.r_min_frac}
    tasks = [
        (fid, args.depth_dir, args.calib_dir, str(out), args.mode, spec, dense_bounds, args.lidar_frame)
        for fid in ids
    ]
    frames = _fan_out(_convert_frame, tasks, args.jobs)
    failed = [f for f in frames if "error" in f]
    for f in failed:
        log.error("frame %s: %s", f["id"], f["error"])
    manifest = {
        "mode": args.mode,
        "frame": "velodyne" if args.lidar_frame else "camera",
        "spec": spec.to_dict() if args.mode == "sampled" else {"bounds": dense_bounds},
        "frames": frames,
        "failed": len(failed),
    }
    (out / "manifest.json").write_text(_dump(manifest))
    return EXIT_PARTIAL if failed else EXIT_OK


# -- sample-mask -----------------------------------------------------------


def cmd_sample_mask(args) -> int:
    spec = _spec_from_args(args)
    k = kitti_io.parse_calib(Path(args.calib).read_text(), width=args.width, height=args.height)
    mask = build_sample_mask(k, spec)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_bytes(kitti_io.write_mask_image(mask))
    log.info("%d pixels selected", mask.count())
    return EXIT_OK


# -- eval-depth ------------------------------------------------------------


def _depth_frame(task: tuple) -> depth_metrics.MetricAccumulator:
    fid, pred_dir, gt_dir, cap, crop, clamp, median = task
    pred = kitti_io.read_depth_image((Path(pred_dir) / f"{fid}.png").read_bytes())
    gt = kitti_io.read_depth_image((Path(gt_dir) / f"{fid}.png").read_bytes())
    try:
        return depth_metrics.accumulate(pred, gt, cap, crop, clamp, median)
    except ShapeError as exc:
        raise ShapeError(f"frame {fid}: {exc}") from None


def _depth_table(doc: dict) -> str:
    keys = ["abs_rel", "sq_rel", "rms", "rms_log", "delta1", "delta2", "delta3"]
    head = " ".join(f"{k:>9}" for k in keys)
    row = " ".join(f"{doc[k]:9.4f}" for k in keys)
    return f"{head}\n{row}\nn={doc['n']} cap={doc['cap']}\n"


def cmd_eval_depth(args) -> int:
    ids = _frame_ids(args.split, args.gt_depth_dir, ".png")
    crop = tuple(args.crop) if args.crop else None
    clamp = not args.no_clamp
    tasks = [(fid, args.depth_dir, args.gt_depth_dir, args.cap, crop, clamp, args.median_scaling) for fid in ids]
    acc = depth_metrics.merge(_fan_out(_depth_frame, tasks, args.jobs))
    report = depth_metrics.finalize(acc, args.cap, clamp, args.median_scaling)
    doc = report.to_dict()
    if args.table:
        sys.stdout.write(_depth_table(doc))
        if args.out:
            _emit(doc, args.out)
    else:
        _emit(doc, args.out)
    return EXIT_OK


# -- eval-det --------------------------------------------------------------


def _read_labels(path: Path, missing_ok: bool) -> list:
    if missing_ok and not path.exists():
        log.warning("%s missing; treating as no detections", path)
        return []
    return kitti_io.parse_labels(path.read_text())


def _det_table(doc: dict, class_name: str) -> str:
    lines = [f"{class_name:<10} {'ap_bev':>8} {'ap_3d':>8}"]
    for diff, entry in doc[class_name].items():
        cells = ["     n/a" if v is None else f"{v:8.2f}" for v in (entry["ap_bev"], entry["ap_3d"])]
        lines.append(f"{diff:<10} {' '.join(cells)}")
    return "\n".join(lines) + "\n"


def cmd_eval_det(args) -> int:
    ids = _frame_ids(args.split, args.labels_dir, ".txt")
    gts, dets = [], []
    for fid in ids:
        try:
            gts.append(_read_labels(Path(args.labels_dir) / f"{fid}.txt", False))
            dets.append(_read_labels(Path(args.dets_dir) / f"{fid}.txt", True))
        except FormatError as exc:
            raise FormatError(f"frame {fid}: {exc}") from None
    for fid, frame in zip(ids, dets):
        if any(d.score is None for d in frame):
            raise FormatError(f"frame {fid}: detection lines need a trailing score field")
    thresholds = detection_eval.STOCK_IOU_THRESHOLDS if args.stock_iou else detection_eval.DEFAULT_IOU_THRESHOLDS
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = detection_eval.evaluate(
            dets, gts, class_name=args.class_name, mode=args.ap_mode,
            iou_thresholds=thresholds, jobs=args.jobs,
        )
    for w in caught:
        log.warning("%s", w.message)
    doc = report.to_dict()
    if args.table:
        sys.stdout.write(_det_table(doc, args.class_name))
        if args.out:
            _emit(doc, args.out)
    else:
        _emit(doc, args.out)
    return EXIT_OK


# -- rank ------------------------------------------------------------------


def _slug(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "-", s).strip("-").lower()


def _parse_named(items: Iterable[str]) -> dict[str, MetricTable]:
    out = {}
    for item in items:
        if "=" not in item:
            raise FormatError(f"--det-table expects NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        out[name] = MetricTable.load(path)
    return out


def _rank_table(doc: dict) -> str:
    counts = doc["counts"]
    dets = list(next(iter(counts.values())))
    lines = [f"{'metric':<12}" + "".join(f"{d:>14}" for d in dets) + f"{'total':>8}"]
    for metric, row in counts.items():
        lines.append(f"{metric:<12}" + "".join(f"{row[d]:>14}" for d in dets) + f"{doc['totals'][metric]:>8}")
    lines.append(f"best: {doc['best_metric']}")
    return "\n".join(lines) + "\n"


def cmd_rank(args) -> int:
    depth = MetricTable.load(args.depth_table) if args.depth_table else reference.depth_table()
    dets = _parse_named(args.det_table) if args.det_table else reference.detector_tables()
    metrics = args.depth_metrics.split(",") if args.depth_metrics else None
    report = concordance_report(depth, dets, det_metric=args.det_metric, depth_metrics=metrics)
    doc = report.to_dict()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "concordance.json").write_text(_dump(doc))
        for p in report.pairs:
            svg = render_diagram(p.depth_ranking, p.det_ranking,
                                 title=f"{p.depth_metric} vs {p.detector} {report.det_metric}")
            (out / f"{_slug(p.depth_metric)}__{_slug(p.detector)}.svg").write_text(svg)
    if args.table:
        sys.stdout.write(_rank_table(doc))
    elif not args.out:
        sys.stdout.write(_dump(doc))
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def _add_sampling_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beams", type=int, default=KITTI_BEAMS, help="number of virtual LiDAR beams")
    p.add_argument("--h-res", type=float, default=KITTI_H_RES_DEG, help="azimuth step in degrees")
    p.add_argument("--d-max", type=float, default=None, help="max depth in meters (sampled default 80)")
    p.add_argument("--h-max", type=float, default=None, help="max height above camera (sampled default 1)")
    p.add_argument("--r-min-frac", type=float, default=None, help="fraction of top rows to drop (sampled default 0.4)")
    p.add_argument("--h-fov", type=float, default=None, help="horizontal FOV in degrees, centred on the optical axis")
    p.add_argument("--v-fov", type=float, default=None, help="vertical FOV in degrees (used with --clamp-v-fov)")
    p.add_argument("--clamp-v-fov", action="store_true", help="limit the derived vertical extent to --v-fov")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mde3d", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    jobs_default = os.cpu_count() or 1

    p = sub.add_parser("convert", help="depth maps to Pseudo-LiDAR binaries")
    p.add_argument("--depth-dir", required=True)
    p.add_argument("--calib-dir", required=True)
    p.add_argument("--split")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["dense", "sampled"], default="sampled")
    p.add_argument("--lidar-frame", action="store_true", help="write points in the LiDAR frame")
    _add_sampling_flags(p)
    p.add_argument("--jobs", type=int, default=jobs_default)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("sample-mask", help="render the virtual LiDAR pixel mask")
    p.add_argument("--calib", required=True)
    p.add_argument("--width", type=int, default=kitti_io.KITTI_WIDTH)
    p.add_argument("--height", type=int, default=kitti_io.KITTI_HEIGHT)
    p.add_argument("--out", required=True)
    _add_sampling_flags(p)
    p.set_defaults(func=cmd_sample_mask)

    p = sub.add_parser("eval-depth", help="pooled depth metrics")
    p.add_argument("--depth-dir", required=True, help="predicted depth PNGs")
    p.add_argument("--gt-depth-dir", required=True)
    p.add_argument("--split")
    p.add_argument("--cap", type=float, default=depth_metrics.DEFAULT_CAP)
    p.add_argument("--crop", type=int, nargs=4, metavar=("TOP", "BOTTOM", "LEFT", "RIGHT"))
    p.add_argument("--no-clamp", action="store_true", help="do not clamp predictions to [1e-3, cap]")
    p.add_argument("--median-scaling", action="store_true")
    p.add_argument("--out")
    p.add_argument("--table", action="store_true", help="print a human-readable table")
    p.add_argument("--jobs", type=int, default=jobs_default)
    p.set_defaults(func=cmd_eval_depth)

    p = sub.add_parser("eval-det", help="AP_BEV / AP_3D per difficulty")
    p.add_argument("--dets-dir", required=True)
    p.add_argument("--labels-dir", required=True)
    p.add_argument("--split")
    p.add_argument("--class", dest="class_name", default="Car")
    p.add_argument("--ap-mode", type=str.upper, choices=["R11", "R40"], default="R11")
    p.add_argument("--stock-iou", action="store_true", help="0.7 IoU for every difficulty")
    p.add_argument("--out")
    p.add_argument("--table", action="store_true")
    p.add_argument("--jobs", type=int, default=jobs_default)
    p.set_defaults(func=cmd_eval_det)

    p = sub.add_parser("rank", help="inversion counts between depth and detection rankings")
    p.add_argument("--depth-table", help="CSV or JSON metric table (default: shipped reference)")
    p.add_argument("--det-table", action="append", metavar="NAME=PATH")
    p.add_argument("--det-metric", default="ap_bev_mod")
    p.add_argument("--depth-metrics", help="comma-separated subset of depth metrics")
    p.add_argument("--out", help="directory for concordance.json and SVG diagrams")
    p.add_argument("--table", action="store_true")
    p.set_defaults(func=cmd_rank)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except AlignmentError as exc:
        log.error("%s", exc)
        return EXIT_ALIGNMENT
    except EmptyEvaluationError as exc:
        log.error("%s", exc)
        return EXIT_EMPTY
    except (FormatError, ShapeError, ValidationError, MetricLookupError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except (Mde3dError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
