"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys

import numpy as np

from .applications import ControlSession, RolloutError, denoise, predict_long, synthesize_controlled
from .config import SEED_ENV, ConfigError, RunConfig
from .data.motion import MotionClip, MotionFormatError, joint_positions, read_motion, write_motion
from .data.processing import (
    DatasetSplit,
    DEFAULT_HEIGHT_THRESHOLD,
    DEFAULT_SPEED_THRESHOLD,
    DataError,
    NormalizationStats,
    denormalize,
    detect_foot_contact,
    normalize,
    resample,
)
from .data.skeleton import JOINT_NAMES
from .data.synth import KINDS, synth_dataset
from .evaluation import MetricError, MetricReport, d1nn, denoise_error, prediction_error
from .losses import ControlSignal
from .model.checkpoint import CheckpointError, load_checkpoint, load_into, save_checkpoint
from .model.strnn import STRNN
from .nn import ConfigurationError
from .training import (
    MotionDataset,
    TrainingDiverged,
    TrainLog,
    build_dataset,
    compose_and_finetune,
    phases_for,
    train_residual,
    train_spatiotemporal,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(default: int) -> int:
    env = os.environ.get(SEED_ENV)
    return int(env) if env else default


def _thresholds(text: str | None) -> tuple[float, float]:
    if not text:
        return DEFAULT_HEIGHT_THRESHOLD, DEFAULT_SPEED_THRESHOLD
    try:
        h, v = (float(x) for x in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--contact-thresholds expects '<height>,<speed>', got {text!r}") from exc
    return h, v


# -- prepare-data -------------------------------------------------------------

def cmd_prepare(args) -> int:
    clips, names = [], []
    if args.synthetic:
        try:
            kind, frames, seed = args.synthetic.split(",")
            frames, seed = int(frames), _seed(int(seed))
        except ValueError as exc:
            raise UsageError("--synthetic expects 'kind,frames,seed'") from exc
        if kind not in KINDS:
            raise UsageError(f"--synthetic kind must be one of {KINDS}")
        clips.append(synth_dataset(kind, frames, seed))
        names.append(f"synthetic:{kind}:{frames}:{seed}")
    h, v = _thresholds(args.contact_thresholds)
    if args.input:
        paths = sorted(glob.glob(os.path.join(args.input, "*.motion")))
        for p in paths:
            clip = resample(read_motion(p), args.fps)
            frames = clip.frames.copy()
            frames[:, 69:73] = detect_foot_contact(clip, h, v)
            clips.append(MotionClip(clip.fps, frames, clip.skeleton))
            names.append(os.path.basename(p))
    if not clips:
        raise DataError("no input motion found (empty --in directory and no --synthetic)")
    data = build_dataset(clips, args.segment_len, args.stride, _seed(args.seed))
    os.makedirs(args.out, exist_ok=True)
    os.makedirs(os.path.join(args.out, "clips"), exist_ok=True)
    np.save(os.path.join(args.out, "segments.npy"), data.segments)
    np.save(os.path.join(args.out, "raw_segments.npy"), data.raw)
    data.stats.save(os.path.join(args.out, "normalization.json"))
    for i, c in enumerate(clips):
        write_motion(c, os.path.join(args.out, "clips", f"clip{i:03d}.motion"))
    manifest = {
        "fps": args.fps,
        "segment_len": args.segment_len,
        "stride": args.stride,
        "seed": _seed(args.seed),
        "sources": names,
        "clip_frames": [len(c) for c in clips],
        "counts": {k: len(v) for k, v in data.split.to_dict().items()},
        "split": data.split.to_dict(),
    }
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    c = manifest["counts"]
    print(f"{len(data.segments)} segments: {c['train']} train / {c['validation']} validation / {c['test']} test")
    return EXIT_OK


def load_prepared(path) -> MotionDataset:
    try:
        with open(os.path.join(path, "manifest.json")) as fh:
            manifest = json.load(fh)
        segments = np.load(os.path.join(path, "segments.npy"))
        raw = np.load(os.path.join(path, "raw_segments.npy"))
        stats = NormalizationStats.load(os.path.join(path, "normalization.json"))
    except FileNotFoundError as exc:
        raise DataError(f"prepared dataset incomplete: {exc}") from exc
    s = manifest["split"]
    return MotionDataset(segments, DatasetSplit(s["train"], s["validation"], s["test"]), stats, raw)


# -- train ---------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    data = load_prepared(cfg.dataset_dir)
    if data.segments.shape[1] < cfg.tag.segment_len:
        raise DataError(
            f"dataset segments have {data.segments.shape[1]} frames; {cfg.tag} needs {cfg.tag.segment_len}"
        )
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.json"), "w") as fh:
        fh.write(cfg.dumps())
    tcfg = cfg.train_config()
    valid = phases_for(cfg.tag)
    phases = valid if args.phase == "all" else (int(args.phase),)
    for ph in phases:
        if ph not in valid:
            raise UsageError(f"phase {ph} does not apply to {cfg.tag}")
    log_path = os.path.join(out, "train_log.csv")
    model = STRNN(cfg.model_config())
    log = TrainLog()
    first = phases[0]
    if first > 1:
        prev = os.path.join(out, f"phase{first - 1}.ckpt")
        if not os.path.exists(prev):
            raise DataError(f"phase {first} needs the phase {first - 1} checkpoint {prev}")
        load_into(model, prev)
        if os.path.exists(log_path):
            log = _read_log(log_path)
    runners = {1: train_spatiotemporal, 2: train_residual, 3: compose_and_finetune}
    try:
        for ph in phases:
            res = runners[ph](model, data, tcfg, log)
            save_checkpoint(model, os.path.join(out, f"phase{ph}.ckpt"), data.stats,
                            meta={"phase": ph, "best_val": res.best_val, "best_iteration": res.best_iteration})
            print(f"phase {ph}: best validation loss {res.best_val:.6g} at iteration {res.best_iteration}")
    except TrainingDiverged as exc:
        exc.log.write(log_path)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    log.write(log_path)
    last = f"phase{phases[-1]}.ckpt"
    with open(os.path.join(out, "best"), "w") as fh:
        fh.write(last + "\n")
    return EXIT_OK


def _read_log(path) -> TrainLog:
    log = TrainLog()
    with open(path) as fh:
        for row in csv.DictReader(fh):
            log.add(int(row["iter"]), int(row["phase"]), float(row["sigma"]),
                    float(row["train_loss"]) if row["train_loss"] else None,
                    float(row["val_loss"]) if row["val_loss"] else None)
    return log


# -- applications --------------------------------------------------------------

def _load_model(path):
    model, stats, _, _ = load_checkpoint(path)
    if stats is None:
        raise DataError(f"{path}: checkpoint has no normalization statistics")
    model.eval()
    return model, stats


def _write_output(frames_raw: np.ndarray, args, fps: float = 30) -> None:
    write_motion(MotionClip(fps, frames_raw), args.out)
    if args.plot_data:
        write_plot_data(frames_raw, args.plot_data)


def write_plot_data(frames_raw: np.ndarray, path) -> None:
    """Per-frame local joint positions as CSV: frame, then x/y/z per joint."""
    pos = joint_positions(frames_raw)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame"] + [f"{j}_{a}" for j in JOINT_NAMES for a in "xyz"])
        for t, p in enumerate(pos):
            w.writerow([t] + [repr(float(v)) for v in p.reshape(-1)])


def cmd_predict(args) -> int:
    model, stats = _load_model(args.checkpoint)
    prefix = read_motion(args.prefix).frames
    E = model.tag.encode_len
    if len(prefix) < E:
        raise DataError(f"prefix has {len(prefix)} frames; {model.tag} needs {E}")
    gen = predict_long(model, normalize(prefix[-E:], stats), args.frames)
    _write_output(denormalize(gen, stats), args)
    return EXIT_OK


def cmd_denoise(args) -> int:
    model, stats = _load_model(args.checkpoint)
    clip = read_motion(args.input)
    out = denoise(model, normalize(clip.frames, stats), stats)
    _write_output(denormalize(out, stats), args, clip.fps)
    return EXIT_OK


def read_control(path) -> ControlSignal:
    """Lines ``frame vx vz omega [c1 c2 c3 c4]``, frames numbered 0..T-1."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            vals = line.split()
            if len(vals) not in (4, 8):
                raise DataError(f"{path}:{lineno}: expected 'frame vx vz omega [c1 c2 c3 c4]'")
            if int(vals[0]) != len(rows):
                raise DataError(f"{path}:{lineno}: frames must be numbered consecutively from 0")
            rows.append([float(v) for v in vals[1:]])
    if not rows:
        raise DataError(f"{path}: empty control signal")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"{path}: contact columns must be given on every line or none")
    arr = np.array(rows)
    return ControlSignal(arr[:, :3], arr[:, 3:] if arr.shape[1] == 7 else None)


def cmd_synthesize(args) -> int:
    model, stats = _load_model(args.checkpoint)
    prefix = read_motion(args.prefix).frames
    E = model.tag.encode_len
    if len(prefix) < E:
        raise DataError(f"prefix has {len(prefix)} frames; {model.tag} needs {E}")
    signal = read_control(args.control)
    session = ControlSession(steps=args.steps, residual_only=args.residual_only)
    gen = synthesize_controlled(model, normalize(prefix[-E:], stats), signal, stats, session)
    _write_output(denormalize(gen, stats), args)
    bad = [r.start for r in session.reports if r.diverged]
    if bad:
        print(f"warning: fine-tuning diverged in windows starting at {bad}", file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    stats = None
    if args.space == "normalized":
        if args.stats:
            stats = NormalizationStats.load(args.stats)
        elif args.checkpoint:
            _, stats = _load_model(args.checkpoint)
        else:
            raise UsageError("normalized-space metrics need --stats or --checkpoint (or use --space raw)")

    def load(p):
        f = read_motion(p).frames
        return normalize(f, stats) if stats is not None else f

    if args.metric == "d1nn":
        if not args.generated or not args.reference:
            raise UsageError("d1nn needs --generated and --reference")
        rep = d1nn(load(args.generated), [load(p) for p in args.reference], aggregate=args.aggregate)
        reports = [rep]
    elif args.metric == "pred":
        if not args.generated or not args.reference or len(args.reference) != 1:
            raise UsageError("pred needs --generated and exactly one --reference (ground truth)")
        errs = prediction_error(load(args.generated), load(args.reference[0]))
        reports = [MetricReport(f"pred_{h}ms", v, 1, 1, 1, 1) for h, v in errs.items()]
    else:
        if not args.generated or not args.reference or len(args.reference) != 1:
            raise UsageError("denoise needs --generated (denoised) and one --reference (original)")
        a, b = load(args.reference[0]), load(args.generated)
        reports = [MetricReport("denoise_sse", denoise_error(a, b), len(a), 1, 1, 1)]
    text = "".join(r.to_csv() if i == 0 else r.to_csv().split("\n", 1)[1] for i, r in enumerate(reports))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    for r in reports:
        print(r)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="strnn", description="Spatio-temporal motion manifold: data, training and applications.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("prepare-data", help="resample, window, split and normalize motion clips")
    s.add_argument("--in", dest="input", help="directory of .motion files")
    s.add_argument("--out", required=True)
    s.add_argument("--fps", type=float, default=30)
    s.add_argument("--synthetic", help="kind,frames,seed (kind: gait, wave or figure8)")
    s.add_argument("--segment-len", type=int, default=40)
    s.add_argument("--stride", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--contact-thresholds", help="height,speed thresholds in m and m/frame")
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("train", help="run training phases from a run configuration")
    s.add_argument("--config", required=True)
    s.add_argument("--phase", default="all", choices=["1", "2", "3", "all"])
    s.set_defaults(func=cmd_train)

    def outputs(s):
        s.add_argument("--out", required=True, help="output STRNN-MOTION file")
        s.add_argument("--plot-data", help="also write per-frame joint trajectories as CSV")

    s = sub.add_parser("predict", help="open-loop long-horizon prediction")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--prefix", required=True)
    s.add_argument("--frames", type=int, required=True)
    outputs(s)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("denoise", help="project a corrupted clip onto the manifold")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--in", dest="input", required=True)
    outputs(s)
    s.set_defaults(func=cmd_denoise)

    s = sub.add_parser("synthesize", help="controlled synthesis with per-window fine-tuning")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--prefix", required=True)
    s.add_argument("--control", required=True)
    s.add_argument("--steps", type=int, default=20)
    s.add_argument("--residual-only", action="store_true")
    outputs(s)
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("evaluate", help="compute d1nn, per-horizon prediction or denoising error")
    s.add_argument("--metric", required=True, choices=["d1nn", "pred", "denoise"])
    s.add_argument("--generated")
    s.add_argument("--reference", nargs="+")
    s.add_argument("--aggregate", default="mean", choices=["mean", "min"])
    s.add_argument("--space", default="normalized", choices=["normalized", "raw"])
    s.add_argument("--stats")
    s.add_argument("--checkpoint")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"strnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RolloutError, TrainingDiverged, FloatingPointError) as exc:
        print(f"strnn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, MotionFormatError, CheckpointError, ConfigError, ConfigurationError,
            MetricError, FileNotFoundError, ValueError) as exc:
        print(f"strnn: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
