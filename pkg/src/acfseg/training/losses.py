"""Segmentation losses: class-balanced cross entropy with optional bootstrapping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..autodiff import DTYPE, Tensor
from ..autodiff import functional as F

WEIGHT_CLAMP = (0.1, 10.0)


@dataclass(frozen=True)
class LossWeights:
    aux: float = 0.4
    coarse: float = 0.6
    fine: float = 0.7

    def __post_init__(self):
        if min(self.aux, self.coarse, self.fine) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class BootstrapConfig:
    enabled: bool = True
    theta: float = 0.7
    min_k: int = 100000

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.min_k < 1:
            raise ValueError("min_k must be >= 1")


def inverse_frequency_weights(labels: np.ndarray, num_classes: int, ignore_id: int = 255) -> np.ndarray:
    """``total / (N * count_i)`` clamped to [0.1, 10]; absent classes get 1."""
    valid = labels[labels != ignore_id]
    counts = np.bincount(valid.ravel(), minlength=num_classes)[:num_classes].astype(np.float64)
    weights = np.ones(num_classes)
    present = counts > 0
    weights[present] = valid.size / (num_classes * counts[present])
    return np.clip(weights, *WEIGHT_CLAMP).astype(DTYPE)


def bootstrap_select(prob_correct: np.ndarray, valid: np.ndarray, config: BootstrapConfig) -> np.ndarray:
    """Mask of hard pixels: correct-class probability below ``theta``, at least ``min_k`` of them.

    When too few pixels fall below the threshold, the ``min_k`` lowest-probability
    valid pixels are taken instead (all valid pixels if there are fewer).
    """
    prob_correct = np.asarray(prob_correct)
    valid = np.asarray(valid, dtype=bool)
    mask = valid & (prob_correct < config.theta)
    if mask.sum() >= config.min_k:
        return mask
    flat_valid = np.flatnonzero(valid.ravel())
    k = min(config.min_k, flat_valid.size)
    order = np.argsort(prob_correct.ravel()[flat_valid], kind="stable")
    out = np.zeros(valid.size, dtype=bool)
    out[flat_valid[order[:k]]] = True
    return out.reshape(valid.shape)


def balanced_ce(
    logits: Tensor,
    labels: np.ndarray,
    ignore_id: int = 255,
    class_weights: Union[None, str, np.ndarray] = "auto",
    bootstrap: Optional[BootstrapConfig] = None,
) -> Tensor:
    """Mean of ``w[y] * -log softmax(logits)[y]`` over the counted pixels.

    ``class_weights`` is ``"auto"`` (per-batch inverse frequency), ``None``
    (all ones) or an explicit length-N array. Counted pixels are all
    non-ignored pixels, or the bootstrapped subset. With nothing to count the
    loss is zero and so is its gradient.
    """
    B, N, H, W = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (B, H, W):
        raise ValueError(f"labels {labels.shape} do not match logits {logits.shape}")
    valid = labels != ignore_id
    bad = valid & ((labels < 0) | (labels >= N))
    if bad.any():
        raise ValueError(f"label values must be in [0, {N}) or the ignore id {ignore_id}")
    if not valid.any():
        return F.scale(F.sum(logits), 0.0)

    if isinstance(class_weights, str):
        if class_weights != "auto":
            raise ValueError(f"unknown class weighting {class_weights!r}")
        weights = inverse_frequency_weights(labels, N, ignore_id)
    elif class_weights is None:
        weights = np.ones(N, dtype=DTYPE)
    else:
        weights = np.asarray(class_weights, dtype=DTYPE)

    target = np.where(valid, labels, 0)
    nll = F.scale(F.pick(F.log_softmax(logits, axis=1), target, axis=1), -1.0)
    counted = valid
    if bootstrap is not None and bootstrap.enabled:
        counted = bootstrap_select(np.exp(-nll.data), valid, bootstrap)
    pixel_w = np.where(counted, weights[target], 0.0).astype(DTYPE)
    return F.scale(F.sum(F.mul(nll, Tensor(pixel_w))), 1.0 / counted.sum())


def total_loss(aux, coarse, fine, weights: LossWeights = LossWeights()):
    """Weighted sum of the three head losses; ``fine=None`` drops that term.

    Works on plain floats and on scalar tensors.
    """
    if isinstance(aux, Tensor):
        out = F.add(F.scale(aux, weights.aux), F.scale(coarse, weights.coarse))
        if fine is not None:
            out = F.add(out, F.scale(fine, weights.fine))
        return out
    out = weights.aux * aux + weights.coarse * coarse
    if fine is not None:
        out = out + weights.fine * fine
    return out
