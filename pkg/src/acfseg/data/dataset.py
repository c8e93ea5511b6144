"""Manifest-backed segmentation datasets held in memory."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .netpbm import read_pgm, read_ppm


class ManifestError(ValueError):
    pass


@dataclass
class SegDataset:
    """``images``: M x 3 x H x W float32 in [0, 1]; ``labels``: M x H x W uint8."""

    images: np.ndarray
    labels: np.ndarray
    class_names: List[str]

    def __len__(self) -> int:
        return len(self.images)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


@dataclass
class DatasetManifest:
    root: Path
    splits: dict
    class_names: List[str]

    @classmethod
    def load(cls, root) -> "DatasetManifest":
        root = Path(root)
        path = root / "manifest.json"
        if not path.is_file():
            raise ManifestError(f"no manifest.json in {root}")
        raw = json.loads(path.read_text(encoding="utf-8"))
        splits = {k: [tuple(p) for p in v] for k, v in raw.items() if k in ("train", "val")}
        return cls(root, splits, list(raw["classes"]))

    def pairs(self, split: str) -> List[Tuple[str, str]]:
        if split not in self.splits:
            raise ManifestError(f"manifest has no {split!r} split")
        return self.splits[split]

    def validate(self, split: str) -> None:
        """Check that every file exists and image/label sizes agree."""
        for img_rel, lbl_rel in self.pairs(split):
            img_path, lbl_path = self.root / img_rel, self.root / lbl_rel
            for p in (img_path, lbl_path):
                if not p.is_file():
                    raise ManifestError(f"missing file {p}")
            image, label = read_ppm(img_path), read_pgm(lbl_path)
            if image.shape[:2] != label.shape:
                raise ManifestError(
                    f"size mismatch: {img_rel} is {image.shape[1]}x{image.shape[0]}, "
                    f"{lbl_rel} is {label.shape[1]}x{label.shape[0]}"
                )

    def read(self, split: str) -> SegDataset:
        self.validate(split)
        pairs = self.pairs(split)
        if not pairs:
            raise ManifestError(f"split {split!r} is empty")
        images = [read_ppm(self.root / a) for a, _ in pairs]
        labels = [read_pgm(self.root / b) for _, b in pairs]
        if len({im.shape for im in images}) != 1:
            raise ManifestError(f"split {split!r} mixes image sizes")
        stacked = np.stack(images).transpose(0, 3, 1, 2).astype(np.float32) / 255.0
        return SegDataset(stacked, np.stack(labels), self.class_names)


def load_split(root, split: str) -> SegDataset:
    return DatasetManifest.load(root).read(split)
