"""Random flip, scale and crop for (image, label) pairs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..imaging import resize_bilinear, resize_nearest


@dataclass(frozen=True)
class AugmentParams:
    flip: bool
    scale: float
    top: int = 0
    left: int = 0


def apply(image, label, params: AugmentParams, crop: int, mean_color, ignore_id: int = 255):
    """Deterministic part of the augmentation given drawn parameters."""
    if params.flip:
        image = image[:, :, ::-1]
        label = label[:, ::-1]
    h, w = label.shape
    nh, nw = max(1, int(round(h * params.scale))), max(1, int(round(w * params.scale)))
    image = resize_bilinear(np.ascontiguousarray(image), nh, nw)
    label = resize_nearest(np.ascontiguousarray(label), nh, nw)
    ph, pw = max(crop, nh), max(crop, nw)
    if (ph, pw) != (nh, nw):
        canvas = np.empty((image.shape[0], ph, pw), dtype=np.float32)
        canvas[...] = np.asarray(mean_color, dtype=np.float32).reshape(-1, 1, 1)
        canvas[:, :nh, :nw] = image
        lab = np.full((ph, pw), ignore_id, dtype=label.dtype)
        lab[:nh, :nw] = label
        image, label = canvas, lab
    t, l = params.top, params.left
    return (
        np.ascontiguousarray(image[:, t:t + crop, l:l + crop]),
        np.ascontiguousarray(label[t:t + crop, l:l + crop]),
    )


def draw_params(rng: np.random.Generator, shape: Tuple[int, int], crop: int,
                scale_range=(0.5, 2.0), flip: bool = True) -> AugmentParams:
    do_flip = bool(rng.random() < 0.5) if flip else False
    scale = float(rng.uniform(*scale_range))
    h, w = shape
    nh, nw = max(crop, int(round(h * scale))), max(crop, int(round(w * scale)))
    top = int(rng.integers(0, nh - crop + 1))
    left = int(rng.integers(0, nw - crop + 1))
    return AugmentParams(do_flip, scale, top, left)


def augment(image: np.ndarray, label: np.ndarray, rng: np.random.Generator, crop: int,
            scale_range=(0.5, 2.0), flip: bool = True, mean_color=None, ignore_id: int = 255,
            params: Optional[AugmentParams] = None):
    """Flip with p=0.5, rescale uniformly in ``scale_range``, then crop to ``crop``.

    Short sides are padded with ``mean_color`` (image) and ``ignore_id`` (label).
    """
    if mean_color is None:
        mean_color = image.mean(axis=(1, 2))
    if params is None:
        params = draw_params(rng, label.shape, crop, scale_range, flip)
    return apply(image, label, params, crop, mean_color, ignore_id)
