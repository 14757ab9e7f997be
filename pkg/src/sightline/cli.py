"""Command-line entry point: ``sightline <subcommand> ...``.

Exit codes: 0 success, 2 input or validation error, 1 anything else.
Randomness comes from ``--seed`` (falling back to ``$SIGHTLINE_SEED``, then
0) fed to numpy's PCG64 ``default_rng``.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import tempfile
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import augment, ingest, metrics, pipeline, report
from .geometry import decode_grid
from .loss import LossWeights
from .postprocess import DEFAULT_NMS_IOU, filter_by_score, nms
from .trainer import TrainConfig, TrainingDiverged, records_to_csv, train

log = logging.getLogger("sightline")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def data_path(*parts: str) -> Path:
    """Path to a file bundled under ``sightline/data``."""
    return Path(str(resources.files("sightline").joinpath("data", *parts)))


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _resolutions(text: str) -> list[tuple[int, int]]:
    out = []
    for tok in text.split(","):
        try:
            w, h = tok.lower().split("x")
            out.append((int(w), int(h)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected WxH list like 320x320,640x640, got {text!r}") from None
    return out


def _seed(args: argparse.Namespace) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SIGHTLINE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise InputError(f"SIGHTLINE_SEED must be an integer, got {env!r}") from None


def _read(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from None


def write_atomic(outputs: dict[Path, bytes | str]) -> None:
    """Write every file via temp-and-rename, only after all content exists."""
    staged = []
    try:
        for path, content in outputs.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            data = content.encode("utf-8") if isinstance(content, str) else content
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            staged.append((tmp, path))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)


def cmd_eval(args: argparse.Namespace) -> int:
    if not Path(args.manifest).is_file():
        raise InputError(f"{args.manifest}: manifest not found")
    manifest = ingest.read_manifest(args.manifest)
    rep = pipeline.evaluate_dataset(manifest, args.iou_thresholds, args.nms_iou, args.score_cut, args.jobs)
    out = Path(args.out_dir)
    pr_points = tuple((p.recall, p.precision) for p in rep.pr) or ((0.0, 0.0),)
    series = [report.PlotSeries("all classes", pr_points, "recall", "precision")]
    outputs: dict[Path, bytes | str] = {
        out / "metrics.csv": rep.metrics_csv(),
        out / "pr_curve.csv": rep.pr_csv(),
        out / "pr_curve.svg": report.render_svg(series, title="Precision-Recall"),
        out / "per_class_ap.csv": rep.per_class_csv(),
    }
    write_atomic(outputs)
    if args.png:
        report.save_figure(series, out / "pr_curve.png", title="Precision-Recall")
    sys.stdout.write(rep.metrics_csv())
    return EXIT_OK


def cmd_nms(args: argparse.Namespace) -> int:
    dets = ingest.parse_detections(_read(args.input))
    kept = nms(filter_by_score(dets, args.score), args.iou, args.class_aware)
    sys.stdout.write(ingest.write_detections(kept))
    return EXIT_OK


def cmd_augment(args: argparse.Namespace) -> int:
    img = ingest.read_ppm(_read(args.image))
    boxes = ingest.parse_labels(_read(args.labels))
    if args.theta is not None:
        theta = math.radians(args.theta)
    elif args.seed is not None or "SIGHTLINE_SEED" in os.environ:
        theta = augment.sample_theta(np.random.default_rng(_seed(args)))
    else:
        theta = 0.0
    spec = augment.AugmentationSpec(
        theta=theta,
        scale=args.scale,
        hflip=args.hflip,
        brightness=args.brightness,
        contrast=args.contrast,
        saturation=args.saturation,
        min_box_retention=args.retention,
    )
    log.info("augment theta=%.6f rad", theta)
    img, boxes = augment.compose(img, boxes, spec)
    prefix = Path(args.out_prefix)
    write_atomic({
        prefix.with_name(prefix.name + ".ppm"): ingest.write_ppm(img),
        prefix.with_name(prefix.name + ".txt"): ingest.write_labels(boxes),
    })
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    grid = ingest.read_tensor(_read(args.tensor))
    dets = decode_grid(grid, args.conf)
    if args.nms_iou is not None:
        dets = nms(dets, args.nms_iou, args.class_aware)
    sys.stdout.write(ingest.write_detections(dets))
    return EXIT_OK


def cmd_train_toy(args: argparse.Namespace) -> int:
    fixture = Path(args.fixture) if args.fixture else data_path("train_fixture.json")
    train_set, val_set = ingest.read_training_fixture(_read(fixture))
    cfg = TrainConfig(
        learning_rate=args.lr,
        total_epochs=args.epochs,
        patience=args.patience,
        lr_decay_factor=args.decay_factor,
        lr_decay_every=args.decay_every,
        weights=LossWeights(args.lambda_coord, args.lambda_noobj),
        seed=_seed(args),
    )
    params, records = train(train_set, val_set, cfg)
    out = Path(args.out_dir)
    outputs: dict[Path, bytes | str] = {
        out / "train_log.csv": records_to_csv(records),
        out / "model.json": ingest.write_tensor(params),
    }
    series = []
    if records:
        series = [
            report.PlotSeries("train", tuple((r.epoch, r.train_loss) for r in records), "epoch", "loss"),
            report.PlotSeries("validation", tuple((r.epoch, r.val_loss) for r in records), "epoch", "loss"),
        ]
        top = max(max(r.train_loss, r.val_loss) for r in records)
        x_max = max(records[-1].epoch, 1)
        outputs[out / "loss_curve.svg"] = report.render_svg(
            series, (0.0, float(x_max)), (0.0, top if top > 0 else 1.0), title="Training and validation loss"
        )
    write_atomic(outputs)
    if args.png and series:
        report.save_figure(series, out / "loss_curve.png", None, None, "Training and validation loss", logy=True)
    if records:
        last = records[-1]
        print(f"epochs={len(records)} final_train_loss={last.train_loss:.9g} final_val_loss={last.val_loss:.9g}")
    else:
        print("epochs=0")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    rep = pipeline.bench(args.resolutions, args.iterations, args.boxes, seed=_seed(args), nms_iou=args.nms_iou)
    csv = rep.to_csv()
    if args.out:
        out = Path(args.out)
        write_atomic({out: csv})
        if args.png:
            pts = tuple((r.width, r.mean_ms) for r in rep.rows)
            series = [report.PlotSeries("mean latency", pts, "input width (px)", "ms / frame")]
            report.save_figure(series, out.with_suffix(".png"), None, None, "Post-processing latency")
    sys.stdout.write(csv)
    return EXIT_OK


def cmd_confusion(args: argparse.Namespace) -> int:
    if args.labels:
        pairs = []
        text = _read(args.labels).decode("utf-8", errors="strict")
        for n, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise ingest.ParseError("expected 'predicted,actual'", line=n, path=args.labels)
            pairs.append((parts[0], parts[1]))
        counts = metrics.binary_image_confusion(pairs, args.positive)
    else:
        if None in (args.tp, args.tn, args.fp, args.fn):
            raise InputError("give --labels or all of --tp --tn --fp --fn")
        counts = metrics.ConfusionCounts(args.tp, args.fp, args.fn, args.tn)
    sys.stdout.write(report.render_confusion_table(counts, (args.positive, args.negative)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sightline", description="Single-shot detection post-processing toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eval", help="evaluate detections against labels over IoU thresholds")
    e.add_argument("--manifest", required=True)
    e.add_argument("--iou-thresholds", type=_floats, default=list(pipeline.TABLE_THRESHOLDS))
    e.add_argument("--nms-iou", type=float, default=DEFAULT_NMS_IOU)
    e.add_argument("--score-cut", type=float, default=0.0)
    e.add_argument("--out-dir", required=True)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--png", action="store_true", help="also save a matplotlib PNG of the PR curve")
    e.set_defaults(func=cmd_eval)

    n = sub.add_parser("nms", help="score-filter and suppress a detection file")
    n.add_argument("--in", dest="input", required=True)
    n.add_argument("--iou", type=float, default=DEFAULT_NMS_IOU)
    n.add_argument("--score", type=float, default=0.0)
    n.add_argument("--class-aware", type=_bool, default=True)
    n.set_defaults(func=cmd_nms)

    a = sub.add_parser("augment", help="augment a P6 image and its labels")
    a.add_argument("--image", required=True)
    a.add_argument("--labels", required=True)
    a.add_argument("--theta", type=float, default=None, help="rotation in degrees")
    a.add_argument("--scale", type=float, default=1.0)
    a.add_argument("--hflip", action="store_true")
    a.add_argument("--brightness", type=float, default=1.0)
    a.add_argument("--contrast", type=float, default=1.0)
    a.add_argument("--saturation", type=float, default=1.0)
    a.add_argument("--retention", type=float, default=augment.DEFAULT_RETENTION)
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--out-prefix", required=True)
    a.set_defaults(func=cmd_augment)

    d = sub.add_parser("decode", help="decode a grid tensor into detections")
    d.add_argument("--tensor", required=True)
    d.add_argument("--conf", type=float, default=0.25)
    d.add_argument("--nms-iou", type=float, default=DEFAULT_NMS_IOU)
    d.add_argument("--class-aware", type=_bool, default=True)
    d.set_defaults(func=cmd_decode)

    t = sub.add_parser("train-toy", help="fit a prediction tensor to fixture targets")
    t.add_argument("--fixture", default=None, help="defaults to the bundled fixture")
    t.add_argument("--epochs", type=int, default=500)
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--patience", type=int, default=10)
    t.add_argument("--decay-factor", type=float, default=1.0)
    t.add_argument("--decay-every", type=int, default=1)
    t.add_argument("--lambda-coord", type=float, default=5.0)
    t.add_argument("--lambda-noobj", type=float, default=0.5)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--png", action="store_true")
    t.set_defaults(func=cmd_train_toy)

    b = sub.add_parser("bench", help="time preprocess + decode + NMS per frame")
    b.add_argument("--resolutions", type=_resolutions, default=[(320, 320), (640, 640), (1280, 1280)])
    b.add_argument("--iterations", type=int, default=50)
    b.add_argument("--boxes", type=int, default=32)
    b.add_argument("--nms-iou", type=float, default=DEFAULT_NMS_IOU)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--out", default=None, help="also write the CSV here")
    b.add_argument("--png", action="store_true")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("confusion", help="binary confusion table and derived metrics")
    c.add_argument("--tp", type=int)
    c.add_argument("--tn", type=int)
    c.add_argument("--fp", type=int)
    c.add_argument("--fn", type=int)
    c.add_argument("--labels", default=None, help="file of 'predicted,actual' lines")
    c.add_argument("--positive", default="No Weapon")
    c.add_argument("--negative", default="Weapon")
    c.set_defaults(func=cmd_confusion)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, ValueError, TrainingDiverged, OSError) as e:
        # ParseError and UnicodeDecodeError subclass ValueError
        print(f"sightline {args.command}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"sightline {args.command}: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
