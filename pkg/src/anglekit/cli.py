"""Command-line frontend.

Every subcommand writes machine output (JSON or CSV) to stdout and
diagnostics to stderr. Identical invocations produce byte-identical
output. Exit codes: 0 success, 1 check failure, 2 usage or input error,
3 empty-input condition. ANGLEKIT_THREADS caps internal parallelism
(0 or unset = auto).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .codecs import (AnglePrediction, CodecConfig, FitFunction, Method, analytic_errors,
                     decode, empirical_errors, encode, head_thickness, omega)
from .errors import AngleKitError
from .evaluation import VOC07, VOC12, evaluate
from .io_formats import (DEFAULT_IOU_THRESHOLDS, parse_annotation_dir, parse_detections,
                         write_report)
from .losses import run_gradient_checks
from .obb import OrientedBox, rotated_iou, rotated_nms

GRADCHECK_TOLERANCE = 1e-4

_METHOD_DEFAULT_CTHETA = {
    Method.REGRESSION: (1,),
    Method.CSL: (180,),
    Method.DCL_BINARY: (32, 64, 128, 256),
    Method.DCL_GRAY: (32, 64, 128, 256),
    Method.MGAR: (3, 4, 5),
}


def thread_cap() -> int | None:
    """Worker cap from ANGLEKIT_THREADS; None means auto."""
    raw = os.environ.get("ANGLEKIT_THREADS", "").strip()
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise AngleKitError(f"ANGLEKIT_THREADS must be an integer, got {raw!r}")
    if value < 0:
        raise AngleKitError(f"ANGLEKIT_THREADS must be >= 0, got {value}")
    return value or None


def _emit(payload) -> None:
    print(json.dumps(payload, sort_keys=True))


def _parse_box(text: str) -> OrientedBox:
    parts = text.split(",")
    if len(parts) != 5:
        raise AngleKitError(f"box must be 'cx,cy,w,h,theta', got {text!r}")
    return OrientedBox(*[float(p) for p in parts])


def _codec_from_args(args) -> CodecConfig:
    return CodecConfig(
        method=Method(args.method),
        c_theta=args.ctheta or 0,
        window_size=args.window,
        fit_function=FitFunction(args.fit),
    )


def cmd_encode(args) -> int:
    config = _codec_from_args(args)
    target = encode(args.angle, config)
    _emit({
        "method": config.method.value,
        "c_theta": config.c_theta,
        "omega": omega(config),
        "k": target.class_index,
        "class_vector": [float(v) for v in target.class_vector],
        "residual": target.raw_angle - target.class_index * omega(config),
        "residual_target": target.residual_target,
    })
    return 0


def cmd_decode(args) -> int:
    config = _codec_from_args(args)
    logits = np.array([float(v) for v in args.logits.split(",")]) if args.logits else np.zeros(0)
    pred = AnglePrediction(class_logits=logits, regression_output=args.treg)
    _emit({"theta": decode(pred, config)})
    return 0


def cmd_iou(args) -> int:
    _emit({"iou": rotated_iou(_parse_box(args.box_a), _parse_box(args.box_b))})
    return 0


def cmd_nms(args) -> int:
    records = parse_detections(args.detections, strict=False, max_workers=thread_cap())
    items = [(r.box, r.score, r.category) for r in records]
    kept = rotated_nms(items, args.threshold, class_agnostic=args.class_agnostic)
    _emit({"kept": kept, "total": len(items)})
    return 0


def cmd_thickness(args) -> int:
    _emit({"thickness": head_thickness(Method(args.method), args.ctheta, args.anchors)})
    return 0


def cmd_codec_report(args) -> int:
    methods = [Method(m) for m in args.methods.split(",")] if args.methods else list(Method)
    rows = []
    for method in methods:
        for c_theta in _METHOD_DEFAULT_CTHETA[method]:
            config = CodecConfig(method=method, c_theta=c_theta)
            a_max, a_mean = analytic_errors(config)
            e_max, e_mean = empirical_errors(config, args.grid_step)
            rows.append({
                "method": method.value,
                "c_theta": c_theta,
                "omega": omega(config),
                "analytic_max_error": a_max,
                "analytic_mean_error": a_mean,
                "empirical_max_error": e_max,
                "empirical_mean_error": e_mean,
                "thickness_a9": head_thickness(method, c_theta, 9),
            })
    if args.out == "json":
        _emit(rows)
        return 0
    columns = ["method", "c_theta", "omega", "analytic_max_error", "analytic_mean_error",
               "empirical_max_error", "empirical_mean_error", "thickness_a9"]
    print(",".join(columns))
    for row in rows:
        print(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                       for c in columns))
    return 0


def cmd_eval(args) -> int:
    workers = thread_cap()
    gts = parse_annotation_dir(args.gt, strict=False, max_workers=workers)
    if not gts:
        print("no ground-truth records found", file=sys.stderr)
        return 3
    dets = parse_detections(args.det, strict=False, max_workers=workers)
    if args.nms is not None:
        by_image: dict[str, list[int]] = {}
        for i, r in enumerate(dets):
            by_image.setdefault(r.image_id, []).append(i)
        keep: list[int] = []
        for image_id in sorted(by_image):
            idxs = by_image[image_id]
            items = [(dets[i].box, dets[i].score, dets[i].category) for i in idxs]
            keep.extend(idxs[k] for k in rotated_nms(items, args.nms))
        dets = [dets[i] for i in sorted(keep)]
    thresholds = ([float(t) for t in args.thresholds.split(",")] if args.thresholds
                  else list(DEFAULT_IOU_THRESHOLDS))
    report = evaluate(gts, dets, thresholds, mode=args.mode)
    if args.out:
        fmt = "csv" if str(args.out).endswith(".csv") else "json"
        write_report(report, fmt, args.out)
    parts = [f"mAP@{t:.2f}={report.map_by_threshold[t]:.6f}" for t in report.thresholds]
    if report.map_50_95 is not None:
        parts.append(f"mAP@0.50:0.95={report.map_50_95:.6f}")
    print(", ".join(parts))
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradient_checks(seed=args.seed, points=args.points, corrupt=args.corrupt)
    errors = {name: r.max_relative_error for name, r in results.items()}
    failed = {name: r for name, r in results.items()
              if r.max_relative_error >= GRADCHECK_TOLERANCE}
    _emit({
        "passed": not failed,
        "tolerance": GRADCHECK_TOLERANCE,
        "seed": args.seed,
        "max_relative_error": errors,
    })
    if failed:
        for name, r in sorted(failed.items()):
            print(f"gradient check failed: {name} rel_err={r.max_relative_error:.3e} "
                  f"at point {list(r.worst_point)}", file=sys.stderr)
        return 1
    return 0


def _add_codec_flags(parser, require_angle=False):
    parser.add_argument("--method", required=True,
                        choices=[m.value for m in Method])
    parser.add_argument("--ctheta", type=int, default=0,
                        help="angle bin count (0 = per-method default)")
    parser.add_argument("--window", type=float, default=6.0, help="CSL window size")
    parser.add_argument("--fit", default="square",
                        choices=[f.value for f in FitFunction],
                        help="residual fitting function")
    if require_angle:
        parser.add_argument("--angle", type=float, required=True,
                            help="ground-truth angle in degrees, [0, 180)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anglekit",
                                     description="Oriented-box angle codecs and evaluation")
    parser.add_argument("--version", action="version", version=f"anglekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode an angle into a codec target")
    _add_codec_flags(p, require_angle=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode logits and residual into an angle")
    _add_codec_flags(p)
    p.add_argument("--logits", default="",
                   help="comma-separated class logits (use --logits=-1,2,... for negatives)")
    p.add_argument("--treg", type=float, default=None, help="fit-space residual prediction")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("iou", help="rotated IoU of two boxes")
    p.add_argument("--box-a", required=True, help="cx,cy,w,h,theta")
    p.add_argument("--box-b", required=True, help="cx,cy,w,h,theta")
    p.set_defaults(func=cmd_iou)

    p = sub.add_parser("nms", help="greedy rotated NMS over a detections file")
    p.add_argument("--detections", required=True, help="detections JSON file or directory")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--class-agnostic", action="store_true")
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("thickness", help="prediction-layer thickness of a codec")
    p.add_argument("--method", required=True, choices=[m.value for m in Method])
    p.add_argument("--ctheta", type=int, required=True)
    p.add_argument("--anchors", type=int, default=9)
    p.set_defaults(func=cmd_thickness)

    p = sub.add_parser("codec-report", help="encoding-error and thickness table")
    p.add_argument("--methods", default="", help="comma-separated methods (default: all)")
    p.add_argument("--grid-step", type=float, default=0.01, dest="grid_step",
                   help="sweep step in degrees for empirical errors")
    p.add_argument("--out", default="csv", choices=["csv", "json"], help="output format")
    p.set_defaults(func=cmd_codec_report)

    p = sub.add_parser("eval", help="evaluate detections against ground truth")
    p.add_argument("--gt", required=True, help="annotation directory")
    p.add_argument("--det", required=True, help="detections JSON file or Task1 directory")
    p.add_argument("--mode", default=VOC12, choices=[VOC07, VOC12])
    p.add_argument("--thresholds", default="", help="comma-separated IoU thresholds")
    p.add_argument("--nms", type=float, default=None,
                   help="apply per-image rotated NMS at this threshold first")
    p.add_argument("--out", default=None, help="write the full report here (.json or .csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all loss gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AngleKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
