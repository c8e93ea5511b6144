"""Cosine-similarity maps before the coarse and the fine classifier.

Trains a short ACF(sum) model, picks a pixel inside the first foreground
object of a validation image and writes two PGM maps: how similar every
other location's feature is to that pixel, before and after ACF.

Run: python3 demos/03_similarity_maps.py [--out /tmp/acfseg-simmaps]
"""

import argparse
from pathlib import Path

import numpy as np

from acfseg.config import TrainConfig
from acfseg.data import SyntheticSpec, generate, load_split, write_ppm
from acfseg.evaluation import feature_similarity_map, stage_feature, write_similarity_pgm
from acfseg.training import train

parser = argparse.ArgumentParser()
parser.add_argument("--out", default="/tmp/acfseg-simmaps")
parser.add_argument("--iters", type=int, default=400)
args = parser.parse_args()
out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)

generate(SyntheticSpec(), out / "data")
train_set, val_set = load_split(out / "data", "train"), load_split(out / "data", "val")
model = train(TrainConfig(max_iter=args.iters), train_set).model

image, label = val_set.images[0], val_set.labels[0]
rows, cols = np.nonzero(label[::8, ::8])
anchor = (int(rows[0]), int(cols[0])) if len(rows) else (0, 0)
print(f"anchor feature cell {anchor}, class {label[anchor[0] * 8, anchor[1] * 8]}")

write_ppm(out / "image.ppm", np.rint(image.transpose(1, 2, 0) * 255).astype(np.uint8))
for stage in ("coarse", "fine"):
    sim = feature_similarity_map(stage_feature(model, image, stage), anchor)
    same = sim[label[::8, ::8] == label[anchor[0] * 8, anchor[1] * 8]].mean()
    other = sim[label[::8, ::8] != label[anchor[0] * 8, anchor[1] * 8]].mean()
    print(f"{stage:>6}: mean similarity same class {same:+.3f}, other classes {other:+.3f}")
    write_similarity_pgm(out / f"sim_{stage}.pgm", np.kron(sim, np.ones((8, 8))))
print(f"maps written to {out}")
