"""Confusion matrices, mIoU, multi-scale/flip inference and feature similarity."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor
from .autodiff import functional as F
from .config import EvalConfig
from .data.netpbm import write_pgm
from .network import OUTPUT_STRIDE, ACFNet
from .imaging import resize_bilinear


def confusion_matrix(gt: np.ndarray, pred: np.ndarray, num_classes: int, ignore_id: int = 255) -> np.ndarray:
    """``cm[g, p]`` = number of pixels with ground truth ``g`` predicted as ``p``."""
    gt = np.asarray(gt).ravel()
    pred = np.asarray(pred).ravel()
    if gt.shape != pred.shape:
        raise ValueError("ground truth and prediction sizes differ")
    keep = gt != ignore_id
    gt, pred = gt[keep].astype(np.int64), pred[keep].astype(np.int64)
    return np.bincount(gt * num_classes + pred, minlength=num_classes ** 2).reshape(num_classes, num_classes)


def class_iou(cm: np.ndarray) -> np.ndarray:
    """Per-class IoU; NaN where a class never occurs in either ground truth or prediction."""
    cm = np.asarray(cm, dtype=np.int64)
    tp = np.diag(cm)
    denom = cm.sum(axis=0) + cm.sum(axis=1) - tp
    iou = np.full(len(cm), np.nan)
    ok = denom > 0
    iou[ok] = tp[ok] / denom[ok]
    return iou


def miou(cm: np.ndarray) -> Tuple[float, np.ndarray]:
    iou = class_iou(cm)
    if np.all(np.isnan(iou)):
        raise ValueError("no evaluated pixels")
    return float(np.nanmean(iou)), iou


def pixel_accuracy(cm: np.ndarray) -> float:
    total = cm.sum()
    return float(np.trace(cm) / total) if total else float("nan")


def _scaled_size(size: int, scale: float) -> int:
    return max(OUTPUT_STRIDE, int(round(size * scale / OUTPUT_STRIDE)) * OUTPUT_STRIDE)


def _head_probs(model: ACFNet, image: np.ndarray) -> Dict[str, np.ndarray]:
    out = model.forward(Tensor(image))
    probs = {"coarse": F.softmax(out.coarse, axis=1).data}
    if out.fine is not None:
        probs["fine"] = F.softmax(out.fine, axis=1).data
    return probs


def ms_flip_probs(model: ACFNet, image: np.ndarray, config: EvalConfig = EvalConfig()) -> Dict[str, np.ndarray]:
    """Average softmax outputs over scales (and mirrored copies) for every head.

    ``image`` is ``B x 3 x H x W``; results are ``B x N x H x W`` per head.
    """
    was_training = model.training
    model.eval()
    H, W = image.shape[2:]
    sums: Dict[str, np.ndarray] = {}
    runs = 0
    try:
        for s in config.scales:
            h, w = _scaled_size(H, s), _scaled_size(W, s)
            scaled = np.stack([resize_bilinear(im, h, w) for im in image])
            for mirrored in ((False, True) if config.flip else (False,)):
                x = scaled[..., ::-1].copy() if mirrored else scaled
                for head, p in _head_probs(model, x).items():
                    if mirrored:
                        p = p[..., ::-1]
                    p = np.stack([resize_bilinear(np.ascontiguousarray(q), H, W) for q in p])
                    sums[head] = p if head not in sums else sums[head] + p
                runs += 1
    finally:
        model.train(was_training)
    return {head: total / np.float32(runs) for head, total in sums.items()}


def ms_flip_infer(model: ACFNet, image: np.ndarray, config: EvalConfig = EvalConfig()) -> np.ndarray:
    """Fused class probabilities of the final head (fine if present, else coarse)."""
    probs = ms_flip_probs(model, image, config)
    return probs.get("fine", probs["coarse"])


def predict_probs(model: ACFNet, image: np.ndarray) -> np.ndarray:
    """Single-scale final-head probabilities in eval mode."""
    was_training = model.training
    model.eval()
    try:
        return F.softmax(model.predict_logits(Tensor(image)), axis=1).data
    finally:
        model.train(was_training)


def feature_similarity_map(feature: np.ndarray, anchor: Tuple[int, int]) -> np.ndarray:
    """Cosine similarity of every pixel's ``C``-vector to the one at ``anchor``."""
    feature = np.asarray(feature, dtype=np.float64)
    C, H, W = feature.shape
    r, c = anchor
    if not (0 <= r < H and 0 <= c < W):
        raise ValueError(f"anchor {anchor} outside {H}x{W} map")
    flat = feature.reshape(C, -1)
    ref = feature[:, r, c]
    norms = np.linalg.norm(flat, axis=0) * np.linalg.norm(ref)
    dots = ref @ flat
    sim = np.zeros_like(dots)
    nz = norms > 0
    sim[nz] = dots[nz] / norms[nz]
    return np.clip(sim, -1.0, 1.0).reshape(H, W)


def similarity_to_gray(sim: np.ndarray) -> np.ndarray:
    return np.rint((np.asarray(sim) + 1.0) / 2.0 * 255.0).clip(0, 255).astype(np.uint8)


def write_similarity_pgm(path, sim: np.ndarray) -> None:
    write_pgm(path, similarity_to_gray(sim))


def stage_feature(model: ACFNet, image: np.ndarray, stage: str) -> np.ndarray:
    """``C x h x w`` feature before the coarse classifier head or the fine classifier."""
    was_training = model.training
    model.eval()
    try:
        out = model.forward(Tensor(image[None] if image.ndim == 3 else image), keep_features=True)
    finally:
        model.train(was_training)
    key = {"coarse": "coarse_feature", "fine": "fine_feature"}.get(stage)
    if key is None:
        raise ValueError("stage must be 'coarse' or 'fine'")
    if key not in out.extras:
        raise ValueError(f"model variant {model.config.variant!r} has no fine stage")
    return out.extras[key].data[0]


@dataclass
class EvalReport:
    class_names: List[str]
    cm: Dict[str, np.ndarray]
    miou: Dict[str, float] = field(default_factory=dict)
    iou: Dict[str, np.ndarray] = field(default_factory=dict)
    pixel_acc: Dict[str, float] = field(default_factory=dict)

    @property
    def final_head(self) -> str:
        return "fine" if "fine" in self.cm else "coarse"

    @property
    def final_miou(self) -> float:
        return self.miou[self.final_head]

    def rows(self) -> List[List[str]]:
        def fmt(x):
            return "" if x is None or (isinstance(x, float) and np.isnan(x)) else repr(float(x))

        rows = [["class_id", "class_name", "iou_coarse", "iou_fine"]]
        fine = self.iou.get("fine")
        for i, name in enumerate(self.class_names):
            rows.append([str(i), name, fmt(self.iou["coarse"][i]), fmt(None if fine is None else fine[i])])
        rows.append(["mean", "miou", fmt(self.miou["coarse"]), fmt(self.miou.get("fine"))])
        rows.append(["all", "pixel_acc", fmt(self.pixel_acc["coarse"]), fmt(self.pixel_acc.get("fine"))])
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.rows())


def evaluate(
    model: ACFNet,
    images: np.ndarray,
    labels: np.ndarray,
    config: EvalConfig = EvalConfig(),
    class_names: Optional[Sequence[str]] = None,
    ignore_id: int = 255,
    batch_size: int = 8,
) -> EvalReport:
    """mIoU of coarse and (when present) fine outputs over a set of images."""
    if len(images) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    n = model.config.num_classes
    names = list(class_names) if class_names is not None else [str(i) for i in range(n)]
    cms: Dict[str, np.ndarray] = {}
    for start in range(0, len(images), batch_size):
        batch = images[start:start + batch_size]
        gt = labels[start:start + batch_size]
        for head, p in ms_flip_probs(model, batch, config).items():
            cm = confusion_matrix(gt, p.argmax(axis=1), n, ignore_id)
            cms[head] = cm if head not in cms else cms[head] + cm
    report = EvalReport(names, cms)
    for head, cm in cms.items():
        report.miou[head], report.iou[head] = miou(cm)
        report.pixel_acc[head] = pixel_accuracy(cm)
    return report
