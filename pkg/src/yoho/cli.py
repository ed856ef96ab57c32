"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 model/profile mismatch.
``YOHO_THREADS`` sets the worker count for file-level parallelism in
``extract-features`` and ``predict`` (default 1; ``bench`` is always serial).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .audio_io import WavError, load_mono
from .datagen import SynthConfig, synth_dataset
from .features import log_mel, save_features
from .label_codec import write_events_tsv
from .network import TrainConfig, build_network, load_checkpoint, save_checkpoint, train
from .network.checkpoint import CheckpointError
from .network.model import ArchConfig
from .pipeline import (ModelMismatchError, UnmatchedFilesError, bench, check_model,
                       evaluate_dirs, load_training_set, predict_events)
from .profiles import PROFILES, get_profile

log = logging.getLogger("yoho")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("YOHO_THREADS", "1")))
    except ValueError:
        raise UsageError("YOHO_THREADS must be an integer") from None


def _profile(args):
    profile = get_profile(args.profile)
    if getattr(args, "window", None):
        profile = profile.with_window(args.window)
    if getattr(args, "classes", None):
        profile = profile.with_classes([c.strip() for c in args.classes.split(",")])
    return profile


def _map(fn, items):
    workers = _threads()
    if workers == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def cmd_synth_data(args):
    cfg = SynthConfig(clip_duration=args.duration, sample_rate=args.sample_rate,
                      overlap_allowed=not args.no_overlap, seed=args.seed)
    manifest = synth_dataset(cfg, args.n_clips, args.out)
    print(manifest)


class _Extractor:
    def __init__(self, profile, out):
        self.profile, self.out = profile, Path(out)

    def __call__(self, wav):
        buf = load_mono(wav, self.profile.features.sample_rate)
        dest = self.out / (Path(wav).stem + ".ymel")
        save_features(dest, log_mel(buf, self.profile.features))
        return dest


def cmd_extract_features(args):
    profile = _profile(args)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    for dest in _map(_Extractor(profile, args.out), args.wavs):
        print(dest)


def cmd_train(args):
    profile = _profile(args)
    cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                      l2_first_conv=args.l2_first, l2_rest=args.l2_rest,
                      spatial_dropout_rate=args.dropout, early_stop_patience=args.patience,
                      seed=args.seed, max_epochs=args.epochs)
    arch = ArchConfig(args.head, profile.input_time, profile.features.n_mels, len(profile.classes),
                      width=args.width, repeats=args.repeats, **cfg.arch_options())
    net = build_network(arch)
    steps = net.output_shape[0]
    x, y = load_training_set(args.train_manifest, profile, steps, head=args.head)
    vx, vy = load_training_set(args.val_manifest, profile, steps, head=args.head)
    net, history = train(net, (x, y), cfg, (vx, vy),
                         on_epoch=lambda e, t, v: log.info("epoch %d train=%.4f val=%.4f", e, t, v))
    save_checkpoint(args.out, net)
    print(json.dumps({"epochs": len(history), "best_epoch": history.best_epoch + 1,
                      "best_val_loss": min(history.val_loss), "checkpoint": str(args.out)}))


class _Predictor:
    def __init__(self, model, profile, out, threshold, smoothing):
        self.model, self.profile, self.out = model, profile, Path(out)
        self.threshold, self.smoothing = threshold, smoothing
        self._net = None

    def __call__(self, wav):
        if self._net is None:
            self._net = load_checkpoint(self.model)
        buf = load_mono(wav, self.profile.features.sample_rate)
        events = predict_events(self._net, buf, self.profile, self.threshold, self.smoothing)
        dest = self.out / (Path(wav).stem + ".tsv")
        write_events_tsv(dest, events)
        return dest


def cmd_predict(args):
    profile = _profile(args)
    check_model(load_checkpoint(args.model), profile)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    predictor = _Predictor(args.model, profile, args.out, args.threshold, not args.no_smoothing)
    for dest in _map(predictor, args.wavs):
        print(dest)


def cmd_evaluate(args):
    profile = _profile(args)
    report = evaluate_dirs(args.reference, args.estimate, profile, args.segment_size)
    text = report.to_json() if args.json else report.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_bench(args):
    profile = _profile(args)
    yoho_net, frame_net = load_checkpoint(args.yoho), load_checkpoint(args.frame)
    if yoho_net.count_params() != frame_net.count_params():
        log.warning("parameter counts differ: yoho %d vs frame %d",
                    yoho_net.count_params(), frame_net.count_params())
    buffers = [load_mono(w, profile.features.sample_rate) for w in args.wavs]
    report = bench(yoho_net, frame_net, buffers, profile, args.threshold)
    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="yoho", description="YOHO sound event detection toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_profile(p):
        p.add_argument("--profile", choices=sorted(PROFILES), default="music-speech")
        p.add_argument("--window", type=float, help="clip window in seconds (profile-dependent)")
        p.add_argument("--classes", help="comma-separated class list overriding the profile's")
        return p

    p = sub.add_parser("synth-data", help="generate a synthetic WAV/TSV dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-clips", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=8.0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--no-overlap", action="store_true")
    p.set_defaults(func=cmd_synth_data)

    p = with_profile(sub.add_parser("extract-features", help="write YMEL feature files"))
    p.add_argument("--out", required=True)
    p.add_argument("wavs", nargs="+")
    p.set_defaults(func=cmd_extract_features)

    p = with_profile(sub.add_parser("train", help="train a YOHO network"))
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--val-manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--head", choices=["yoho", "frame"], default="yoho")
    p.add_argument("--width", type=float, default=1.0)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--l2-first", type=float, default=0.0)
    p.add_argument("--l2-rest", type=float, default=0.0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = with_profile(sub.add_parser("predict", help="detect events in WAV files"))
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output directory for TSV files")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--no-smoothing", action="store_true")
    p.add_argument("wavs", nargs="+")
    p.set_defaults(func=cmd_predict)

    p = with_profile(sub.add_parser("evaluate", help="segment-based metrics over TSV folders"))
    p.add_argument("--segment-size", type=float)
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")
    p.add_argument("reference")
    p.add_argument("estimate")
    p.set_defaults(func=cmd_evaluate)

    p = with_profile(sub.add_parser("bench", help="time YOHO against the frame baseline"))
    p.add_argument("--yoho", required=True)
    p.add_argument("--frame", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("wavs", nargs="+")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"yoho: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelMismatchError, CheckpointError) as exc:
        print(f"yoho: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (WavError, UnmatchedFilesError, OSError, ValueError) as exc:
        print(f"yoho: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
