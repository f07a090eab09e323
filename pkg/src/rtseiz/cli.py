"""Command line entry points: run, train, score, sweep, bench.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("rtseiz")


class DataError(Exception):
    """Bad input data, tagged with the module that rejected it."""

    def __init__(self, module: str, exc: BaseException):
        super().__init__(f"[{module}] {exc}")
        self.module = module


@contextlib.contextmanager
def stage(module: str):
    from .detector.exchange import ModelFormatError
    from .signal_io import MontageError, RecordingError

    try:
        yield
    except DataError:
        raise
    except (RecordingError, MontageError, ModelFormatError, ValueError, KeyError,
            FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        raise DataError(module, exc) from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value pipeline configuration file")
    p.add_argument("--montage", dest="montage_path", help="montage file (ANODE,CATHODE per line)")
    p.add_argument("--model", dest="model_path", help="model file (MRSN format)")
    p.add_argument("--target-hz", type=float)
    p.add_argument("--window-sec", type=float, help="max local scaling window")
    p.add_argument("--window-samples", type=int)
    p.add_argument("--stride-samples", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--s-th", type=float)
    p.add_argument("--bd-min", dest="bd_min_sec", type=float)
    p.add_argument("--sd-min", dest="sd_min_sec", type=float)
    p.add_argument("--seed", type=int)


_CONFIG_KEYS = ("montage_path", "model_path", "target_hz", "window_sec", "window_samples",
                "stride_samples", "image_size", "s_th", "bd_min_sec", "sd_min_sec", "seed")


def _config(args):
    from .pipeline import load_config

    with stage("cli"):
        return load_config(args.config, **{k: getattr(args, k, None) for k in _CONFIG_KEYS})


def _model(cfg):
    from .detector.exchange import load_model

    if not cfg.model_path:
        raise DataError("detector", ValueError("no model given (--model or model_path in --config)"))
    with stage("detector"):
        model = load_model(cfg.model_path)
    if model.cfg.input_size != cfg.image_size:
        raise DataError("detector", ValueError(
            f"model expects {model.cfg.input_size}px images, config makes {cfg.image_size}px"))
    return model


def _recording(path):
    from .signal_io import load_recording

    with stage("signal_io"):
        return load_recording(path)


def _single_core() -> None:
    import os

    import torch

    torch.set_num_threads(1)
    if hasattr(os, "sched_setaffinity"):
        with contextlib.suppress(OSError):
            os.sched_setaffinity(0, {min(os.sched_getaffinity(0))})


# --------------------------------------------------------------------------

def cmd_run(args) -> int:
    from .pipeline import detect_offline, detect_streaming
    from .postproc import write_events

    cfg = _config(args)
    model = _model(cfg)
    rec = _recording(args.recording)
    with stage("pipeline"):
        if args.offline:
            events = detect_offline(rec, model, cfg)
        else:
            events = detect_streaming(rec, model, cfg, chunk_sec=args.chunk_sec).events
    write_events(events, args.output)
    n_sz = len(events.seizures())
    log.info("%s: %d seizure event(s) over %.1f s -> %s", args.recording, n_sz, rec.duration_sec, args.output)
    return EXIT_OK


def _load_dataset(directory: Path, cfg, min_overlap: float = 0.5):
    """Labelled windows from a dataset directory.

    Either ``bckg/*.pgm`` and ``seiz/*.pgm`` window images, or recordings
    (``*.csv`` / ``*.eegr``) each with a ``<stem>.ann`` reference annotation.
    """
    from .detector import LabeledImages
    from .pipeline import labeled_windows
    from .postproc import read_events
    from .signal_io import load_recording
    from .windowing import GrayscaleImage, read_pgm, resize_bicubic

    if not directory.is_dir():
        raise DataError("cli", FileNotFoundError(f"dataset directory {directory} not found"))
    images, labels = [], []
    for label, sub in enumerate(("bckg", "seiz")):
        for path in sorted((directory / sub).glob("*.pgm")):
            with stage("windowing"):
                px = read_pgm(path)
            if px.shape != (cfg.image_size, cfg.image_size):
                px = resize_bicubic(GrayscaleImage(px, 0.0), cfg.image_size, cfg.image_size).pixels
            images.append(px)
            labels.append(label)
    if images:
        return LabeledImages(np.stack(images), np.array(labels))
    pairs = []
    recs = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".csv", ".eegr", ".bin"))
    for path in recs:
        ann = path.with_suffix(".ann")
        if not ann.exists():
            raise DataError("cli", FileNotFoundError(f"{path.name} has no annotation file {ann.name}"))
        with stage("signal_io"):
            rec = load_recording(path)
        with stage("postproc"):
            ref = read_events(ann)
        pairs.append((rec, ref))
    if not pairs:
        raise DataError("cli", ValueError(f"{directory} holds neither bckg/ seiz/ images nor recordings"))
    with stage("pipeline"):
        return labeled_windows(pairs, cfg, min_overlap)


def cmd_train(args) -> int:
    from .detector import (MiniResNetConfig, TrainConfig, build_mini_resnet, class_weights,
                           save_model, subsample_background, train)

    cfg = _config(args)
    data = _load_dataset(Path(args.dataset), cfg, args.min_overlap)
    stats = data.stats
    if stats.n_seiz == 0 or stats.n_bckg == 0:
        raise DataError("detector", ValueError(
            f"single-class dataset ({stats.n_seiz} seizure, {stats.n_bckg} background windows)"))
    with stage("detector"):
        data = subsample_background(data, args.bckg_fraction, cfg.seed)
        weights = class_weights(data.stats)
    log.info("training on %d seizure / %d background windows; weights bckg=%.5f seiz=%.5f",
             data.stats.n_seiz, data.stats.n_bckg, weights.w_bckg, weights.w_seiz)
    widths = tuple(int(w) for w in args.widths.split(","))
    model = build_mini_resnet(MiniResNetConfig(input_size=cfg.image_size, stem_channels=widths[0],
                                               layer_widths=widths, seed=cfg.seed))
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=cfg.seed)
    result = train(model, data, weights, tcfg)
    save_model(result.model, args.output)
    log_path = args.log or str(Path(args.output).with_suffix(".log.csv"))
    result.write_log(log_path)
    with open(log_path, "a") as fh:
        fh.write(f"# class_weights,w_bckg={weights.w_bckg:.6f},w_seiz={weights.w_seiz:.6f}\n")
    if result.history:
        last = result.history[-1]
        log.info("final epoch %d: loss %.4f, accuracy %.4f", last.epoch, last.mean_loss, last.accuracy)
    return EXIT_OK


def cmd_score(args) -> int:
    from .postproc import read_events
    from .scoring import confusion_matrix, score_epoch, score_ovlp, write_reports

    with stage("postproc"):
        ref = read_events(args.reference)
        hyp = read_events(args.hypothesis)
    with stage("scoring"):
        reports = [score_ovlp(ref, hyp), score_epoch(ref, hyp, args.epoch_sec)]
        cm = confusion_matrix(ref, hyp, args.epoch_sec)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            write_reports(reports, fh)
    else:
        write_reports(reports, sys.stdout)
    log.info("epoch confusion matrix:\n%s", cm.format())
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .pipeline import posteriors, window_images
    from .postproc import read_events
    from .scoring import sweep_delay, write_sweep

    cfg = _config(args)
    model = _model(cfg)
    rec = _recording(args.recording)
    with stage("postproc"):
        ref = read_events(args.reference)
    with stage("pipeline"):
        fe = window_images(rec, cfg)
        post = posteriors(model, fe.images, cfg, fe.group_delay_sec)
    grid = [(bd, sd) for bd in args.bd_grid for sd in args.sd_grid]
    rows = []
    with stage("scoring"):
        for s_th in args.s_th_grid or [cfg.s_th]:
            rows.extend(sweep_delay(post, ref, s_th, grid))
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        write_sweep(rows, out, extended=args.extended)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench

    cfg = _config(args)
    model = _model(cfg)
    rec = _recording(args.recording)
    _single_core()
    with stage("pipeline"):
        report = run_bench(rec, model, cfg, chunk_sec=args.chunk_sec)
    text = json.dumps(report.as_dict(), indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rtseiz", description="Real-time EEG seizure detection pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="detect seizures in a recording, write a hypothesis annotation")
    _config_args(p)
    p.add_argument("recording")
    p.add_argument("-o", "--output", required=True, help="hypothesis annotation file")
    p.add_argument("--chunk-sec", type=float, default=1.0, help="streaming replay chunk length")
    p.add_argument("--offline", action="store_true", help="batch-process instead of streaming")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("train", help="train the reference model from a dataset directory")
    _config_args(p)
    p.add_argument("dataset", help="directory with bckg/ and seiz/ PGMs, or recordings + .ann files")
    p.add_argument("-o", "--output", required=True, help="model file to write")
    p.add_argument("--log", help="training log CSV (default: <output>.log.csv)")
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--bckg-fraction", type=float, default=0.2,
                   help="share of background windows kept")
    p.add_argument("--widths", default="8,16,32,64", help="four residual layer widths")
    p.add_argument("--min-overlap", type=float, default=0.5,
                   help="share of a window inside a seizure for it to count as seizure")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a hypothesis against a reference annotation")
    p.add_argument("reference")
    p.add_argument("hypothesis")
    p.add_argument("--epoch-sec", type=float, default=1.0)
    p.add_argument("-o", "--output", help="report CSV (default: stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="sensitivity / false alarms versus detection delay")
    _config_args(p)
    p.add_argument("recording")
    p.add_argument("reference")
    p.add_argument("--s-th-grid", type=_float_list, help="thresholds (default: config s_th)")
    p.add_argument("--bd-grid", type=_float_list, default=[0.0], help="BD_min values, seconds")
    p.add_argument("--sd-grid", type=_float_list, default=[0.0], help="SD_min values, seconds")
    p.add_argument("--extended", action="store_true", help="include parameter columns")
    p.add_argument("-o", "--output", help="sweep CSV (default: stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="measure xRT and the latency breakdown on one recording")
    _config_args(p)
    p.add_argument("recording")
    p.add_argument("--chunk-sec", type=float, default=1.0)
    p.add_argument("-o", "--output", help="write the JSON report here too")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(name)s: %(message)s")
    import torch

    torch.set_num_threads(1)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"rtseiz {args.command}: data error {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"rtseiz {args.command}: data error [io] {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        logging.getLogger("rtseiz").exception("internal error")
        print(f"rtseiz {args.command}: internal error {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
