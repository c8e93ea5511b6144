"""Procedural shapes dataset with pixel-exact labels.

Each image has a striped background (class 0) and one to three foreground
objects. Foreground class ``k`` fixes the shape kind, a base color and a
texture, but every image also draws a global color cast, so absolute color
is only weakly informative across images while staying consistent within
one image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .. import config as cfg
from .netpbm import write_pgm, write_ppm

SHAPE_KINDS = ("rectangle", "disk", "triangle")


@dataclass
class SyntheticSpec:
    num_train: int = 200
    num_val: int = 50
    image_size: int = 64
    num_classes: int = 4
    noise_sigma: float = 0.08
    color_cast: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise cfg.ConfigError("num_classes must be >= 2 (background plus one shape class)")
        if self.image_size < 16 or self.image_size % 8:
            raise cfg.ConfigError("image_size must be a multiple of 8 and at least 16")
        if self.num_train < 1 or self.num_val < 0:
            raise cfg.ConfigError("need num_train >= 1 and num_val >= 0")


def class_names(num_classes: int) -> List[str]:
    return ["background"] + [f"class{i}" for i in range(1, num_classes)]


def _palette(num_classes: int) -> np.ndarray:
    # Evenly spaced hues at moderate saturation; class 0 is a neutral grey.
    colors = [np.array([0.5, 0.5, 0.5])]
    for k in range(1, num_classes):
        h = (k - 1) / max(num_classes - 1, 1)
        angle = 2 * np.pi * h
        colors.append(0.5 + 0.22 * np.array([np.cos(angle), np.cos(angle - 2.094), np.cos(angle + 2.094)]))
    return np.stack(colors)


def _shape_mask(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    extent = rng.uniform(0.25, 0.45) * size
    cy, cx = rng.uniform(extent * 0.6, size - extent * 0.6, 2)
    if kind == "rectangle":
        hh, hw = extent * rng.uniform(0.6, 1.0, 2)
        return (np.abs(yy - cy) <= hh) & (np.abs(xx - cx) <= hw)
    if kind == "disk":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= extent ** 2
    # triangle: random rotation of an equilateral triangle
    theta = rng.uniform(0, 2 * np.pi)
    verts = [(cy + extent * np.sin(theta + a), cx + extent * np.cos(theta + a)) for a in (0, 2.094, 4.189)]
    inside = np.ones_like(yy, dtype=bool)
    for (y0, x0), (y1, x1) in zip(verts, verts[1:] + verts[:1]):
        inside &= (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0) >= 0
    return inside


def _texture(k: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    period = 4 + 2 * ((k - 1) // 3)
    style = (k - 1) % 3
    if style == 0:
        return 0.08 * (((yy // period) + (xx // period)) % 2 - 0.5)
    if style == 1:
        return np.zeros((size, size))
    phase = rng.uniform(0, period)
    return 0.08 * np.sin(2 * np.pi * (yy + xx + phase) / period)


def render_sample(spec: SyntheticSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(image HxWx3 uint8, label HxW uint8)``."""
    n, size = spec.num_classes, spec.image_size
    palette = _palette(n)
    cast = rng.uniform(-spec.color_cast, spec.color_cast, 3)

    yy, xx = np.mgrid[0:size, 0:size]
    angle = rng.uniform(0, np.pi)
    period = rng.uniform(6, 12)
    stripes = 0.1 * np.sin(2 * np.pi * (np.cos(angle) * yy + np.sin(angle) * xx) / period)
    image = palette[0] + cast + rng.uniform(-0.1, 0.1, 3) + stripes[..., None]
    label = np.zeros((size, size), dtype=np.uint8)

    while True:
        for _ in range(rng.integers(1, 4)):
            k = int(rng.integers(1, n))
            mask = _shape_mask(SHAPE_KINDS[(k - 1) % len(SHAPE_KINDS)], size, rng)
            color = palette[k] + cast + rng.uniform(-0.06, 0.06, 3)
            texture = _texture(k, size, rng)
            image[mask] = color + texture[mask][:, None]
            label[mask] = k
        if label.any():
            break

    image = image + rng.normal(0.0, spec.noise_sigma, image.shape)
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    return pixels, label


def generate(spec: SyntheticSpec, out_dir) -> Path:
    """Write ``train/`` and ``val/`` PPM/PGM pairs plus ``manifest.json``; return the manifest path."""
    out = Path(out_dir)
    manifest = {"classes": class_names(spec.num_classes), "image_size": spec.image_size}
    for split_id, (split, count) in enumerate((("train", spec.num_train), ("val", spec.num_val))):
        (out / split).mkdir(parents=True, exist_ok=True)
        pairs = []
        for i in range(count):
            rng = np.random.default_rng([spec.seed, split_id, i])
            image, label = render_sample(spec, rng)
            img_rel, lbl_rel = f"{split}/img_{i:05d}.ppm", f"{split}/lbl_{i:05d}.pgm"
            write_ppm(out / img_rel, image)
            write_pgm(out / lbl_rel, label)
            pairs.append([img_rel, lbl_rel])
        manifest[split] = pairs
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    (out / "spec.txt").write_text(cfg.to_text(spec), encoding="utf-8")
    return path
