"""Batch command-line surface: ``airsig <command> [flags]``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .augment import augment_30, member_suffix
from .config import load_config
from .dataset import (SampleRecord, arrays_by_split, generate_corpus, read_manifest,
                      read_partition, split_dataset, write_manifest, write_partition)
from .detection import detect_frame
from .errors import AirsigError, DomainError
from .evaluate import evaluate_model, format_report, parse_report
from .synth import make_signer, render_stereo_frames, sample_forgery, sample_genuine
from .trajectory import (RawSequence, bspline_resample, decode_raw_csv, decode_tiptail_csv,
                         derive_tip_tail, encode_raw_csv, encode_tiptail_csv, render_trace_image)

log = logging.getLogger("airsig")

EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3

VARIANT_FLAGS = {"tip-only": "tip_only", "tiptail": "tiptail_single", "two-stream": "two_stream"}


def _config(args, **overrides):
    return load_config(getattr(args, "config", None),
                       {k: v for k, v in overrides.items() if v is not None})


def _write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _detect_track(rig, track, cfg, noise=0.0, seed=0):
    left, right = render_stereo_frames(rig, track, noise=noise, seed=seed)
    rows = [detect_frame(l, r, (cfg.orange_band, cfg.green_band)).row() for l, r in zip(left, right)]
    return RawSequence.from_pixels(rows, rig.image_width, rig.image_height)


# -- commands ---------------------------------------------------------------

def cmd_synth_generate(args):
    cfg = _config(args, signers=args.signers, genuine=args.genuine, forgeries=args.forgeries,
                  seed=args.seed)
    out = Path(args.out)
    sub = "tiptail" if args.mode == "tiptail" else "raw"
    (out / sub).mkdir(parents=True, exist_ok=True)
    records = []
    for rec, track in generate_corpus(cfg.signers, cfg.genuine, cfg.forgeries, cfg.seed, cfg.synth):
        rel = f"{sub}/{rec.key}.csv"
        if args.mode == "tiptail":
            text = encode_tiptail_csv(track.tip_tail())
        else:
            text = encode_raw_csv(_detect_track(cfg.rig, track, cfg))
        _write(out / rel, text)
        records.append(SampleRecord(rec.signer_id, rec.sample_id, rec.kind, rec.target_id, rel))
    write_manifest(out / "manifest.csv", records)
    print(f"wrote {len(records)} samples to {out}")


def cmd_render_stereo(args):
    cfg = _config(args, seed=args.seed)
    signer = make_signer(args.signer, cfg.seed, cfg.synth)
    if args.forger is not None:
        track = sample_forgery(signer, make_signer(args.forger, cfg.seed, cfg.synth),
                               args.variation, cfg.synth)
    else:
        track = sample_genuine(signer, args.variation, cfg.synth)
    if args.max_frames is not None:
        track = track.head(args.max_frames)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    left, right = render_stereo_frames(cfg.rig, track, noise=args.noise, seed=cfg.seed)
    for i, (l, r) in enumerate(zip(left, right)):
        Image.fromarray(l).save(out / f"{i:04d}_L.ppm")
        Image.fromarray(r).save(out / f"{i:04d}_R.ppm")
    _write(out / "truth.csv", encode_tiptail_csv(track.tip_tail()))
    print(f"rendered {len(left)} stereo frames to {out}")


def cmd_detect(args):
    cfg = _config(args)
    frames = Path(args.frames)
    lefts = sorted(frames.glob("*_L.ppm"))
    if not lefts:
        raise DomainError(f"no NNNN_L.ppm frames in {frames}")
    rows, size = [], None
    for lp in lefts:
        rp = lp.with_name(lp.name[:-6] + "_R.ppm")
        left = np.asarray(Image.open(lp).convert("RGB"))
        right = np.asarray(Image.open(rp).convert("RGB"))
        size = left.shape[1], left.shape[0]
        rows.append(detect_frame(left, right, (cfg.orange_band, cfg.green_band)).row())
    _write(args.out, encode_raw_csv(RawSequence.from_pixels(rows, *size)))
    print(f"detected {len(rows)} frames -> {args.out}")


def _io_pairs(src, dst, pattern="*.csv"):
    src, dst = Path(src), Path(dst)
    if src.is_dir():
        dst.mkdir(parents=True, exist_ok=True)
        return [(p, dst / p.name) for p in sorted(src.glob(pattern))]
    return [(src, dst)]


def cmd_reconstruct(args):
    cfg = _config(args)
    rig = cfg.rig
    for src, dst in _io_pairs(args.input, args.out):
        seq = decode_raw_csv(src.read_text(), rig.image_width, rig.image_height)
        traj = derive_tip_tail(seq, rig)
        _write(dst, encode_tiptail_csv(traj.rows.reshape(-1, 6)))
        if args.trace:
            Path(args.trace).mkdir(parents=True, exist_ok=True)
            Image.fromarray(render_trace_image(seq)).save(Path(args.trace) / f"{src.stem}.pgm")
        print(f"{src.name}: {len(traj)} rows ({traj.dropped_occluded} occluded, "
              f"{traj.dropped_degenerate} degenerate dropped)")


def cmd_interpolate(args):
    cfg = _config(args, length=args.length)
    n = 0
    for src, dst in _io_pairs(args.input, args.out):
        pts = decode_tiptail_csv(src.read_text())
        if args.tip_only:
            pts = pts[:, :3]
        _write(dst, encode_tiptail_csv(bspline_resample(pts, cfg.length)))
        n += 1
    print(f"interpolated {n} trajectories to length {cfg.length}")


def cmd_augment(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    members = cfg.grid.members()
    n = 0
    for src in sorted(Path(args.input).glob("*.csv")):
        pts = decode_tiptail_csv(src.read_text())
        for (a, p, f), aug in zip(members, augment_30(pts, cfg.grid)):
            _write(out / f"{src.stem}__{member_suffix(a, p, f)}.csv", encode_tiptail_csv(aug))
            n += 1
    print(f"wrote {n} augmented trajectories to {out}")


def cmd_split(args):
    cfg = _config(args, seed=args.seed)
    records = read_manifest(args.manifest)
    splits = split_dataset(records, cfg.seed)
    write_partition(args.out, records, splits)
    counts = {s: sum(1 for v in splits.values() if v == s) for s in ("train", "val", "test", "forgery")}
    print(" ".join(f"{k}={v}" for k, v in counts.items()))


def _load_split(args, length):
    records = read_manifest(args.manifest)
    splits = read_partition(args.partition)
    data = Path(args.data)
    samples = {}
    for r in records:
        path = data / f"{r.key}.csv"
        if not path.exists():
            raise DomainError(f"missing interpolated sample {path}")
        pts = decode_tiptail_csv(path.read_text())
        if len(pts) != length:
            raise DomainError(f"{path} has {len(pts)} rows, expected {length}")
        samples[r.key] = pts
    return records, splits, arrays_by_split(samples, records, splits)


def cmd_train(args):
    from .plotting import plot_history
    from .slitcnn import ModelSpec, build_model, train

    cfg = _config(args, length=args.length, seed=args.seed, **{
        "train.max_epochs": args.epochs, "train.batch_size": args.batch_size,
        "train.learning_rate": args.learning_rate, "train.patience": args.patience,
        "train.seed": args.seed})
    records, splits, split = _load_split(args, cfg.length)
    X, y = split.train
    if args.augmented:
        aug_dir = Path(args.augmented)
        keys = [r.key for r in records if splits[r.key] == "train"]
        Xa, ya = [], []
        for r in records:
            if r.key in keys:
                for p in sorted(aug_dir.glob(f"{r.key}__*.csv")):
                    Xa.append(decode_tiptail_csv(p.read_text()))
                    ya.append(r.target_id)
        if not Xa:
            raise DomainError(f"no augmented training files in {aug_dir}")
        X, y = np.array(Xa), np.array(ya)
    elif args.augment:
        X = np.array([a for x in X for a in augment_30(x, cfg.grid)])
        y = np.repeat(y, len(cfg.grid))
    variant = VARIANT_FLAGS[args.variant]
    n_classes = max(args.classes or 0, int(max(y.max(), split.val[1].max())) + 1)
    spec = ModelSpec(variant, t=cfg.length, num_classes=n_classes,
                     dropout=0.25 if args.dropout is None else args.dropout)
    model = build_model(spec, cfg.seed)

    def progress(rec):
        print(f"epoch {rec['epoch']}: train_loss={rec['train_loss']:.5f} "
              f"val_accuracy={rec['val_accuracy']:.4f}", flush=True)

    train(model, X, y, *split.val, cfg.train, progress=progress)
    model.save(args.out)
    history = Path(args.out).with_suffix(".history.csv")
    with open(history, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_accuracy"])
        for h in model.history:
            w.writerow([h["epoch"], f"{h['train_loss']:.9g}", f"{h['val_accuracy']:.9g}"])
    plot_history(model.history, history.with_suffix(".svg"))
    print(f"best epoch {model.best_epoch}; checkpoint -> {args.out}")


def cmd_evaluate(args):
    from .plotting import plot_roc
    from .slitcnn import TrainedModel

    model = TrainedModel.load(args.model)
    _, _, split = _load_split(args, model.spec.t)
    report = evaluate_model(model, split)
    text = format_report(report, {"variant": model.spec.variant, "best_epoch": model.best_epoch})
    _write(args.out, text)
    plot_path = Path(args.plot) if args.plot else Path(args.out).with_suffix(".svg")
    _plot_report_curves(report_text=text, path=plot_path, plot_roc=plot_roc)
    print(f"accuracy={report.recognition_accuracy:.4f} eer_random={report.eer_random:.4f}"
          + (f" eer_skilled={report.eer_skilled:.4f}" if report.eer_skilled is not None else ""))


def _plot_report_curves(report_text, path, plot_roc):
    fields, tables = parse_report(report_text)
    curves = {}
    for name, label in (("roc_random", "random forgery"), ("roc_skilled", "skilled forgery")):
        if name in tables:
            _, far, frr = tables[name]
            curves[label] = (far, frr, float(fields[f"eer_{name[4:]}"]))
    plot_roc(curves, path)


def cmd_roc(args):
    from .plotting import plot_roc

    _plot_report_curves(Path(args.report).read_text(), args.out, plot_roc)
    print(f"ROC -> {args.out}")


def cmd_gradcheck(args):
    from .gradcheck import run_all

    results = run_all(args.seed)
    worst = 0.0
    for name, err in results.items():
        print(f"{name:24s} max_rel_error={err:.3e}")
        worst = max(worst, err)
    if worst >= args.tolerance:
        raise AirsigError(f"gradient check failed: {worst:.3e} >= {args.tolerance:g}")
    print(f"all gradients within {args.tolerance:g}")


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airsig", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-generate", parents=[common], help="synthetic dataset + manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--signers", type=int)
    p.add_argument("--genuine", type=int)
    p.add_argument("--forgeries", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("tiptail", "raw"), default="tiptail",
                   help="exact tip-tail CSVs, or raw CSVs via rendering and detection")
    p.set_defaults(func=cmd_synth_generate)

    p = sub.add_parser("render-stereo", parents=[common], help="render one signature to PPM frames")
    p.add_argument("--out", required=True)
    p.add_argument("--signer", type=int, default=0)
    p.add_argument("--variation", type=int, default=0)
    p.add_argument("--forger", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--max-frames", type=int, help="render only the first N frames")
    p.set_defaults(func=cmd_render_stereo)

    p = sub.add_parser("detect", parents=[common], help="frames directory -> raw CSV")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("reconstruct", parents=[common], help="raw CSV(s) -> tip-tail CSV(s)")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="also write 2D trace rasters (PGM) to this directory")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("interpolate", parents=[common], help="tip-tail CSV(s) -> fixed length")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--length", type=int)
    p.add_argument("--tip-only", action="store_true")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("augment", parents=[common], help="x30 rotation/scaling expansion")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("split", parents=[common], help="manifest -> 16/4/5 partition file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_split)

    for name, func, help_ in (("train", cmd_train, "train a SliTCNN variant"),
                              ("evaluate", cmd_evaluate, "recognition + verification report")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--data", required=True, help="directory of interpolated CSVs")
        p.add_argument("--manifest", required=True)
        p.add_argument("--partition", required=True)
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)
        if name == "train":
            p.add_argument("--variant", choices=tuple(VARIANT_FLAGS), default="two-stream")
            p.add_argument("--augmented", help="directory produced by `augment`")
            p.add_argument("--augment", action="store_true", help="augment in memory")
            p.add_argument("--length", type=int)
            p.add_argument("--seed", type=int)
            p.add_argument("--epochs", type=int)
            p.add_argument("--batch-size", type=int)
            p.add_argument("--learning-rate", type=float)
            p.add_argument("--patience", type=int)
            p.add_argument("--dropout", type=float)
            p.add_argument("--classes", type=int)
        else:
            p.add_argument("--model", required=True, help="checkpoint written by `train`")
            p.add_argument("--plot", help="ROC figure path (default: report path with .svg)")

    p = sub.add_parser("roc", help="re-plot the ROC from a saved report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except AirsigError as exc:
        print(f"airsig {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"airsig {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
