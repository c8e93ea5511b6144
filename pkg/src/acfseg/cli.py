"""Command-line entry point: ``acfseg <subcommand> ...``.

Exit codes: 0 on success, 1 on a runtime failure (message on stderr),
2 on a usage error (argparse prints the usage text).
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import config as cfg
from .config import EvalConfig, TrainConfig
from .data import SyntheticSpec, generate, load_split, read_ppm, write_pgm
from .evaluation import evaluate, feature_similarity_map, ms_flip_infer, stage_feature, write_similarity_pgm
from .network import OUTPUT_STRIDE
from .training import load_checkpoint, train

log = logging.getLogger("acfseg")

THREADS_ENV = "ACFSEG_THREADS"


def _thread_limit():
    """Cap BLAS threads when ``ACFSEG_THREADS`` is set."""
    value = os.environ.get(THREADS_ENV)
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {value!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {value!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _load_image(path) -> np.ndarray:
    """PPM file -> ``3 x H x W`` float32 in [0, 1], checked against the output stride."""
    pixels = read_ppm(path)
    h, w = pixels.shape[:2]
    if h % OUTPUT_STRIDE or w % OUTPUT_STRIDE:
        raise ValueError(f"{path}: {w}x{h} image; both sides must be multiples of {OUTPUT_STRIDE}")
    return pixels.transpose(2, 0, 1).astype(np.float32) / 255.0


def cmd_gen_data(args) -> int:
    spec = cfg.load(SyntheticSpec, args.spec) if args.spec else SyntheticSpec()
    if args.seed is not None:
        spec.seed = args.seed
    manifest = generate(spec, args.out)
    print(f"wrote {spec.num_train} train / {spec.num_val} val samples, manifest {manifest}")
    return 0


def cmd_train(args) -> int:
    config = cfg.load(TrainConfig, args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config.seed = args.seed
    train_set = load_split(args.data, "train")
    try:
        val_set = load_split(args.data, "val")
    except ValueError:
        log.warning("no usable val split in %s; training without validation", args.data)
        val_set = None
    result = train(config, train_set, args.out, val_set)
    if result.val_miou is not None:
        print(f"final val mIoU {result.val_miou:.4f}")
    print(f"run written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    model, config, _, _ = load_checkpoint(args.checkpoint)
    data = load_split(args.data, args.split)
    report = evaluate(
        model,
        data.images,
        data.labels,
        EvalConfig(tuple(args.scales), args.flip),
        class_names=data.class_names,
        ignore_id=config.ignore_id,
    )
    if args.out:
        report.write_csv(args.out)
    csv.writer(sys.stdout, lineterminator="\n").writerows(report.rows())
    return 0


def cmd_infer(args) -> int:
    model, _, _, _ = load_checkpoint(args.checkpoint)
    image = _load_image(args.image)
    probs = ms_flip_infer(model, image[None], EvalConfig(tuple(args.scales), args.flip))[0]
    out = Path(args.out)
    write_pgm(out, probs.argmax(axis=0).astype(np.uint8))
    for k, p in enumerate(probs):
        write_pgm(out.with_name(f"{out.stem}_prob{k}.pgm"), np.rint(p * 255.0).astype(np.uint8))
    print(f"wrote {out} and {len(probs)} probability maps")
    return 0


def cmd_simmap(args) -> int:
    model, _, _, _ = load_checkpoint(args.checkpoint)
    image = _load_image(args.image)
    H, W = image.shape[1:]
    if not (0 <= args.row < H and 0 <= args.col < W):
        raise ValueError(f"anchor ({args.row}, {args.col}) is outside the {H}x{W} image")
    feature = stage_feature(model, image, args.stage)
    sim = feature_similarity_map(feature, (args.row // OUTPUT_STRIDE, args.col // OUTPUT_STRIDE))
    # Each feature cell covers an 8x8 block of the input.
    sim = np.repeat(np.repeat(sim, OUTPUT_STRIDE, axis=0), OUTPUT_STRIDE, axis=1)
    write_similarity_pgm(args.out, sim)
    print(f"wrote {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .autodiff.gradcheck import TOLERANCE, run_suite

    start = args.seed or 0
    results = run_suite(args.op or (), seeds=range(start, start + args.seeds))
    worst = {}
    for r in results:
        worst[r.name] = max(worst.get(r.name, 0.0), r.max_rel_error)
    for name, err in worst.items():
        print(f"{'PASS' if err < TOLERANCE else 'FAIL'} {name:<18} max rel err {err:.2e}")
    failed = [n for n, e in worst.items() if e >= TOLERANCE]
    if failed:
        print(f"{len(failed)} op(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _scales(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("scales must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acfseg", description="Attentional class feature segmentation on the CPU.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--seed", type=int, default=None, help="override the seed (accepted by every subcommand)")
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "write the synthetic shapes dataset")
    p.add_argument("--spec", help="key = value file of SyntheticSpec fields (defaults when omitted)")
    p.add_argument("--out", required=True, help="output directory")

    p = add("train", cmd_train, "train a model and write checkpoints and metrics")
    p.add_argument("--config", help="key = value file of TrainConfig fields (defaults when omitted)")
    p.add_argument("--data", required=True, help="dataset directory containing manifest.json")
    p.add_argument("--out", required=True, help="run directory")

    def add_test_time(p):
        p.add_argument("--scales", type=_scales, nargs="+", default=[1.0], help="test scales, e.g. 0.75 1.0 1.25")
        p.add_argument("--flip", action="store_true", help="also average horizontally flipped predictions")

    p = add("eval", cmd_eval, "report per-class IoU and mIoU for both heads")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="val", choices=("train", "val"))
    p.add_argument("--out", help="also write the report CSV here")
    add_test_time(p)

    p = add("infer", cmd_infer, "predict a label map for one PPM image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="label PGM; per-class maps go next to it as <stem>_prob<k>.pgm")
    add_test_time(p)

    p = add("simmap", cmd_simmap, "cosine-similarity map of one pixel's feature against all others")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--row", type=int, required=True, help="anchor row in image pixels")
    p.add_argument("--col", type=int, required=True, help="anchor column in image pixels")
    p.add_argument("--stage", choices=("coarse", "fine"), required=True)
    p.add_argument("--out", required=True)

    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient checks")
    p.add_argument("--op", action="append", help="op name (repeatable); all ops when omitted")
    p.add_argument("--seeds", type=int, default=5, help="seeds per op")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        print(f"acfseg {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
