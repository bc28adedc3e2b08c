"""``ccnet`` command-line interface.

Exit codes: 0 success, 2 input/format error, 3 numeric failure,
4 verification failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import gradcheck as G
from . import model as M
from .colorcode import Roi, mask_for_frame
from .dataset import load_manifest, write_synth_dataset
from .detect import (
    DEFAULT_MIN_AREA,
    DEFAULT_THRESHOLD,
    DetectionRecord,
    dump_detections,
    frame_difference_detect,
    parse_detections,
)
from .errors import CcnetError, InputError, NumericError, VerificationError
from .imaging import read_ppm, resize_nearest, to_tensor, write_ppm
from .metrics import LABEL_NAMES, metrics_report
from .pipeline import load_images, run_ablation, train_from_manifest
from .trainer import TrainConfig, evaluate

log = logging.getLogger("ccnet")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4
GRADCHECK_TOL = 1e-4


def _emit(obj, stream=None) -> None:
    stream = stream or sys.stdout
    stream.write(json.dumps(obj, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_mask(args) -> int:
    roi = Roi.parse(args.roi) if args.roi else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(args.detections) as fh:
        for rec in parse_detections(fh):
            if Path(rec.frame_id).name != rec.frame_id or rec.frame_id in (".", ".."):
                raise InputError(f"frame id {rec.frame_id!r} is not a plain file name")
            boxes = [b for b in rec.boxes if b.score >= args.min_score]
            mask = mask_for_frame(boxes, rec.width, rec.height, roi=roi, size=args.size)
            write_ppm(mask, out / f"{rec.frame_id}.ppm")
            count += 1
    log.info("wrote %d masks to %s", count, out)
    return EXIT_OK


def cmd_detect(args) -> int:
    frames = sorted(Path(args.frames).glob("*.ppm"))
    records = []
    prev = None
    for path in frames:
        curr = read_ppm(path)
        if prev is not None:
            boxes = frame_difference_detect(prev, curr, args.threshold, args.min_area)
            records.append(DetectionRecord(path.stem, curr.width, curr.height, boxes))
        prev = curr
    with open(args.out, "w") as fh:
        dump_detections(records, fh)
    log.info("wrote %d detection records from %d frames", len(records), len(frames))
    return EXIT_OK


def cmd_synth(args) -> int:
    masks, raw = write_synth_dataset(args.out, args.n_per_class, args.side, args.seed)
    _emit({"masks": str(masks), "raw": str(raw), "n_per_class": args.n_per_class, "side": args.side})
    return EXIT_OK


def _model_config(args) -> M.ModelConfig:
    return M.ModelConfig(input_side=args.input_side, dense_units=args.dense_units, dropout_p=args.dropout)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        augment=not args.no_augment,
        precision=args.precision,
    )


def cmd_train(args) -> int:
    reports_fh = open(args.reports, "w") if args.reports else sys.stdout
    try:
        run = train_from_manifest(
            args.manifest,
            _model_config(args),
            _train_config(args),
            args.train_fraction,
            raw=args.ablation_raw,
            on_epoch=lambda r: (_emit(r.to_json(args.timing), reports_fh), reports_fh.flush()),
        )
    finally:
        if reports_fh is not sys.stdout:
            reports_fh.close()
    M.save_model(run.state, args.out)
    if run.validation is not None:
        log.info("final validation metrics: %s", json.dumps(run.validation, sort_keys=True))
    return EXIT_OK


def _load_model(path) -> M.ModelState:
    try:
        return M.load_model(path)
    except OSError as exc:
        raise InputError(f"cannot read model {path}: {exc}") from exc


def cmd_eval(args) -> int:
    state = _load_model(args.model)
    samples = load_manifest(args.manifest)
    if not samples:
        raise InputError(f"{args.manifest}: no usable samples")
    data = load_images(samples, state.config.input_side, require_mask=not args.ablation_raw)
    _emit(metrics_report(evaluate(state, data)))
    return EXIT_OK


def cmd_predict(args) -> int:
    state = _load_model(args.model)
    try:
        img = read_ppm(args.image)
    except OSError as exc:
        raise InputError(f"cannot read image {args.image}: {exc}") from exc
    side = state.config.input_side
    if (img.width, img.height) != (side, side):
        img = resize_nearest(img, side, side)
    probs, label = M.predict(state, to_tensor(img))
    _emit({"label": label, "probabilities": {LABEL_NAMES[i]: float(probs[i]) for i in LABEL_NAMES}})
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for name, rep in G.check_primitives(args.seed, args.eps).items():
        _emit({"check": name, "max_rel_error": rep.max_rel_error, "samples": len(rep.samples)})
        worst = max(worst, rep.max_rel_error)
    rep = G.check_network(G.SCALES[args.scale], args.seed, args.samples, args.eps)
    _emit({
        "check": f"network_{args.scale}",
        "max_rel_error": rep.max_rel_error,
        "samples": len(rep.samples),
        "skipped_at_kinks": rep.skipped,
        "per_param": rep.per_param,
    })
    worst = max(worst, rep.max_rel_error)
    _emit({"max_rel_error": worst, "tolerance": GRADCHECK_TOL, "passed": worst < GRADCHECK_TOL})
    if len(rep.samples) < args.samples:
        raise VerificationError(f"only {len(rep.samples)} of {args.samples} positions were checkable")
    if not worst < GRADCHECK_TOL:
        raise VerificationError(f"max relative error {worst:.3e} exceeds {GRADCHECK_TOL:g}")
    return EXIT_OK


def cmd_ablation(args) -> int:
    report = run_ablation(
        args.mask_manifest, args.raw_manifest, _model_config(args), _train_config(args), args.train_fraction
    )
    if args.out:
        Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    _emit(report)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    m = M.ModelConfig()
    p.add_argument("--input-side", type=int, default=m.input_side, help="network input side in pixels (default %(default)s)")
    p.add_argument("--dense-units", type=int, default=m.dense_units, help="width of the first dense layer (default %(default)s)")
    p.add_argument("--dropout", type=float, default=m.dropout_p, help="dropout probability (default %(default)s)")
    p.add_argument("--lr", type=float, default=d.learning_rate, help="learning rate (default %(default)s)")
    p.add_argument("--momentum", type=float, default=d.momentum, help="SGD momentum (default %(default)s)")
    p.add_argument("--batch-size", type=int, default=d.batch_size, help="mini-batch size (default %(default)s)")
    p.add_argument("--epochs", type=int, default=d.epochs, help="training epochs (default %(default)s)")
    p.add_argument("--seed", type=int, default=42, help="seed for init, shuffling and splits (default %(default)s)")
    p.add_argument("--no-augment", action="store_true", help="disable random flips")
    p.add_argument("--precision", type=int, choices=(32, 64), default=d.precision, help="float precision (default %(default)s)")
    p.add_argument("--train-fraction", type=float, default=0.8, help="stratified train share (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="render red/white masks from detection JSON Lines")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True, help="output directory for <frame>.ppm masks")
    p.add_argument("--roi", help="X,Y,W,H crop applied before rendering")
    p.add_argument("--size", type=int, default=180, help="output side (default %(default)s)")
    p.add_argument("--min-score", type=float, default=0.0, help="drop boxes scoring below this (default %(default)s)")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("detect", help="frame-differencing detector over a directory of .ppm frames")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=int, default=DEFAULT_THRESHOLD, help="grey-level change threshold (default %(default)s)")
    p.add_argument("--min-area", type=int, default=DEFAULT_MIN_AREA, help="minimum component area (default %(default)s)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="write a synthetic masks/raw dataset with manifests")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--side", type=int, default=64)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the classifier from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--reports", help="epoch report JSON Lines file (default stdout)")
    p.add_argument("--ablation-raw", action="store_true", help="train on untransformed (non-mask) images")
    p.add_argument("--timing", action="store_true", help="include wall-clock seconds in reports")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics report for a model over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--ablation-raw", action="store_true", help="accept non-mask images")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference verification of all gradients")
    p.add_argument("--scale", choices=sorted(G.SCALES), default="small")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--eps", type=float, default=1e-3)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablation", help="train on masks and on raw images, compare")
    p.add_argument("--mask-manifest", required=True)
    p.add_argument("--raw-manifest", required=True)
    p.add_argument("--out", help="also write the comparison JSON here")
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except VerificationError as exc:
        print(f"ccnet: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except NumericError as exc:
        print(f"ccnet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, OSError, ValueError) as exc:
        print(f"ccnet: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CcnetError as exc:
        print(f"ccnet: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
