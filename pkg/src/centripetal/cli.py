"""Command-line surface tying the codec together.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .decoder import DecodeConfig, PredictionMaps, decode, to_proposals
from .encoder import compute_regression_mask, generate_labels
from .errors import CentripetalError
from .evaluation import match_and_score
from .harness import PerturbSpec, bench_decode, perturb, robustness_curve
from .loss import LossConfig, relaxed_l1_loss, total_loss
from .render import render_overlay
from .tensorio import (
    load_annotations,
    load_bundle,
    read_tensor,
    save_bundle,
    save_detections,
    write_tensor,
)


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits with code 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(parser):
    parser.formatter_class = argparse.ArgumentDefaultsHelpFormatter
    return parser


def build_parser():
    parser = _Parser(prog="centripetal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = _fmt(sub.add_parser("encode", help="annotations -> label tensors"))
    p.add_argument("--annotations", required=True, type=Path)
    p.add_argument("--height", required=True, type=int)
    p.add_argument("--width", required=True, type=int)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--shrink-ratio", type=float, default=0.7,
                   help="kernel shrink ratio")
    p.set_defaults(func=_cmd_encode)

    p = _fmt(sub.add_parser("decode", help="prediction tensors -> detections JSON"))
    p.add_argument("--prob", required=True, type=Path)
    p.add_argument("--shift", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--proposals", type=Path, help="also write min-area rectangle proposals")
    p.add_argument("--overlay", type=Path, help="write a PNG overlay of the detections")
    p.add_argument("--gt", type=Path, help="ground-truth annotations drawn red in the overlay")
    p.add_argument("--instance-map", type=Path,
                   help="write the decoded instance-id grid as a float32 tensor")
    _add_decode_flags(p)
    p.set_defaults(func=_cmd_decode)

    p = _fmt(sub.add_parser("loss", help="prediction + label tensors -> loss report"))
    p.add_argument("--prob", required=True, type=Path)
    p.add_argument("--shift", required=True, type=Path)
    p.add_argument("--labels", required=True, type=Path, help="directory written by encode")
    p.add_argument("--out-dir", type=Path, help="write gradient and mask tensors here")
    p.add_argument("--lambda", dest="lam", type=float, default=0.05,
                   help="regression loss weight")
    p.add_argument("--ohem-ratio", type=float, default=3.0,
                   help="hard-negative to positive ratio")
    p.add_argument("--smooth-l1-beta", type=float, default=1.0)
    p.set_defaults(func=_cmd_loss)

    p = _fmt(sub.add_parser("eval", help="detections vs ground truth -> P/R/F report"))
    p.add_argument("--dets", required=True, type=Path)
    p.add_argument("--gts", required=True, type=Path)
    p.add_argument("--iou", type=float, default=0.5, help="match threshold")
    p.add_argument("--height", type=int, help="grid height (default: fit to polygons)")
    p.add_argument("--width", type=int, help="grid width (default: fit to polygons)")
    p.set_defaults(func=_cmd_eval)

    p = _fmt(sub.add_parser("perturb", help="label tensors -> perturbed prediction tensors"))
    p.add_argument("--labels", required=True, type=Path)
    p.add_argument("--mode", required=True,
                   choices=("gaussian_noise", "retarget_in_kernel", "retarget_uniform"))
    p.add_argument("--magnitude", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, help="write prob.ctmp and shift.ctmp here")
    p.add_argument("--magnitudes", type=_float_list,
                   help="comma-separated magnitudes for a robustness curve")
    p.add_argument("--curve", type=Path, help="CSV output (magnitude,iou) for the curve")
    p.add_argument("--plot", type=Path, help="PNG plot of the curve")
    _add_decode_flags(p)
    p.set_defaults(func=_cmd_perturb)

    p = _fmt(sub.add_parser("bench", help="time decode on prediction tensors"))
    p.add_argument("--prob", required=True, type=Path)
    p.add_argument("--shift", required=True, type=Path)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--csv", type=Path, help="also write the report as CSV")
    _add_decode_flags(p)
    p.set_defaults(func=_cmd_bench)

    return parser


def _add_decode_flags(p):
    p.add_argument("--threshold", type=float, default=0.2,
                   help="probability binarization threshold")
    p.add_argument("--connectivity", type=int, default=8, choices=(4, 8),
                   help="kernel component connectivity")
    p.add_argument("--min-kernel-area", type=int, default=2)
    p.add_argument("--min-instance-area", type=int, default=16)
    p.add_argument("--score-threshold", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1,
                   help="row-parallel decode threads (1 = serial)")


def _decode_config(args):
    return DecodeConfig(
        binarize_threshold=args.threshold,
        connectivity=args.connectivity,
        min_kernel_area=args.min_kernel_area,
        min_instance_area=args.min_instance_area,
        score_threshold=args.score_threshold,
    )


def _float_list(text):
    return [float(part) for part in text.split(",") if part.strip()]


def _load_prediction(prob_path, shift_path):
    return PredictionMaps(
        prob_map=read_tensor(prob_path).astype(np.float32),
        shift_field=read_tensor(shift_path).astype(np.float32),
    )


def _cmd_encode(args):
    annotations = load_annotations(args.annotations)
    bundle = generate_labels(annotations, args.height, args.width, args.shrink_ratio)
    save_bundle(args.out_dir, bundle)
    print(json.dumps({"instances": len(annotations),
                      "supervised": int(len(bundle.supervised_ids())),
                      "out_dir": str(args.out_dir)}))
    return 0


def _cmd_decode(args):
    pred = _load_prediction(args.prob, args.shift)
    instances = decode(pred, _decode_config(args), workers=args.workers)
    save_detections(args.out, instances)
    if args.proposals is not None:
        rows = []
        for rect, _, score in to_proposals(instances):
            (cx, cy), (w, h), angle = rect
            rows.append({"center": [cx, cy], "size": [w, h], "angle": angle,
                         "score": score})
        args.proposals.write_text(json.dumps(rows) + "\n", encoding="utf-8")
    if args.instance_map is not None:
        grid = np.zeros(pred.prob_map.shape, dtype=np.float32)
        for inst in instances:
            grid[inst.pixel_mask] = inst.kernel_id
        write_tensor(args.instance_map, grid)
    if args.overlay is not None:
        gts = load_annotations(args.gt) if args.gt is not None else []
        image = render_overlay(
            *pred.prob_map.shape,
            detections=[inst.contour for inst in instances],
            ground_truth=[ann.polygon for ann in gts],
            background=pred.prob_map,
        )
        image.save(args.overlay)
    print(json.dumps({"instances": len(instances), "out": str(args.out)}))
    return 0


def _cmd_loss(args):
    pred = _load_prediction(args.prob, args.shift)
    bundle = load_bundle(args.labels)
    cfg = LossConfig(lam=args.lam, ohem_ratio=args.ohem_ratio,
                     smooth_l1_beta=args.smooth_l1_beta)
    report = total_loss(pred, bundle, cfg)
    print(json.dumps(report.scalars()))
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        regression_mask = compute_regression_mask(pred.shift_field, bundle)
        _, reg_grad = relaxed_l1_loss(pred.shift_field, bundle, regression_mask, cfg)
        write_tensor(args.out_dir / "grad_prob.ctmp", report.grad_prob.astype(np.float32))
        write_tensor(args.out_dir / "grad_shift.ctmp", report.grad_shift.astype(np.float32))
        write_tensor(args.out_dir / "reg_grad_shift.ctmp", reg_grad.astype(np.float32))
        write_tensor(args.out_dir / "regression_mask.ctmp", regression_mask)
        write_tensor(args.out_dir / "ohem_mask.ctmp", report.ohem_mask)
        (args.out_dir / "report.json").write_text(
            json.dumps(report.scalars()) + "\n", encoding="utf-8"
        )
    return 0


def _fit_dims(annotation_sets):
    height = width = 1
    for anns in annotation_sets:
        for ann in anns:
            _, _, xmax, ymax = ann.polygon.bounds
            width = max(width, int(np.ceil(xmax)) + 1)
            height = max(height, int(np.ceil(ymax)) + 1)
    return height, width


def _cmd_eval(args):
    dets = load_annotations(args.dets)
    gts = load_annotations(args.gts)
    if args.height is None or args.width is None:
        height, width = _fit_dims([dets, gts])
    else:
        height, width = args.height, args.width
    report = match_and_score(dets, gts, height, width, iou_thr=args.iou)
    print(json.dumps(report.as_dict()))
    return 0


def _cmd_perturb(args):
    bundle = load_bundle(args.labels)
    if args.magnitudes is not None:
        if args.curve is None:
            raise ValueError("--magnitudes requires --curve")
        curve = robustness_curve(bundle, args.mode, args.magnitudes, seed=args.seed,
                                 cfg=_decode_config(args))
        lines = ["magnitude,iou"] + [f"{m},{iou}" for m, iou in curve]
        args.curve.write_text("\n".join(lines) + "\n", encoding="utf-8")
        if args.plot is not None:
            _plot_curve(curve, args.plot)
        print(json.dumps({"curve": [list(pt) for pt in curve]}))
        return 0
    if args.out_dir is None:
        raise ValueError("perturb needs --out-dir (or --magnitudes with --curve)")
    spec = PerturbSpec(mode=args.mode, magnitude=args.magnitude, seed=args.seed)
    pred = perturb(bundle, spec)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_tensor(args.out_dir / "prob.ctmp", pred.prob_map)
    write_tensor(args.out_dir / "shift.ctmp", pred.shift_field)
    print(json.dumps({"out_dir": str(args.out_dir)}))
    return 0


def _plot_curve(curve, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs, ys = zip(*curve)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(xs, ys, marker="o")
    ax.set_xlabel("perturbation magnitude (px)")
    ax.set_ylabel("mean instance IoU")
    ax.set_ylim(-0.05, 1.05)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _cmd_bench(args):
    pred = _load_prediction(args.prob, args.shift)
    cfg = _decode_config(args)
    reports = {"serial": bench_decode(pred, cfg, repetitions=args.reps, workers=1)}
    if args.workers > 1:
        reports["parallel"] = bench_decode(pred, cfg, repetitions=args.reps,
                                           workers=args.workers)
    print(json.dumps({name: rep.as_dict() for name, rep in reports.items()}))
    if args.csv is not None:
        fields = ["mode", "height", "width", "instances", "repetitions", "workers",
                  "mean_ms", "median_ms", "p95_ms", "pixels_per_second"]
        lines = [",".join(fields)]
        for name, rep in reports.items():
            row = rep.as_dict()
            lines.append(",".join([name] + [str(row[f]) for f in fields[1:]]))
        args.csv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"centripetal {args.command}: {exc}", file=sys.stderr)
        return 1
    except (CentripetalError, OSError) as exc:
        print(f"centripetal {args.command}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
