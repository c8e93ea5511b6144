"""Baseline versus ACF(sum) on the synthetic shapes data.

Trains both variants with the default configuration and prints coarse and
fine mIoU. Roughly one minute per model on one core.

Run: python3 demos/02_ablation.py [--iters 1000] [--seed 0] [--data /tmp/acfseg-shapes]
"""

import argparse

from acfseg.config import TrainConfig
from acfseg.data import SyntheticSpec, generate, load_split
from acfseg.evaluation import evaluate
from acfseg.training import train

parser = argparse.ArgumentParser()
parser.add_argument("--iters", type=int, default=1000)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--data", default="/tmp/acfseg-shapes")
args = parser.parse_args()

generate(SyntheticSpec(), args.data)
train_set, val_set = load_split(args.data, "train"), load_split(args.data, "val")
print(f"{len(train_set)} training and {len(val_set)} validation images, classes {train_set.class_names}")

for variant in ("none", "center-only", "concat", "sum"):
    config = TrainConfig(variant=variant, seed=args.seed, max_iter=args.iters)
    model = train(config, train_set).model
    report = evaluate(model, val_set.images, val_set.labels, class_names=val_set.class_names)
    fine = report.miou.get("fine")
    fine_text = f"{fine:.4f}" if fine is not None else "  -   "
    print(f"{variant:>12}: coarse mIoU {report.miou['coarse']:.4f}  fine mIoU {fine_text}")
