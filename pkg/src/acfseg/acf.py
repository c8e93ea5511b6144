"""Class centers and attentional class features.

Coarse class probabilities act as soft class memberships: each class center
is the probability-weighted mean of the reduced pixel features, and each
pixel then re-reads the centers with its own probabilities as attention
weights (weighted sum, or per-class weighted blocks for the concat variant).
"""

from __future__ import annotations

import numpy as np

from .autodiff import ConvBNReLU, Module, Tensor
from .autodiff import functional as F

CENTER_EPS = 1e-6


def _flatten_spatial(x: Tensor) -> Tensor:
    B, C, H, W = x.shape
    return F.reshape(x, (B, C, H * W))


def class_centers(feature: Tensor, probs: Tensor, eps: float = CENTER_EPS) -> Tensor:
    """Probability-weighted class means.

    Args:
        feature: ``B x C' x H x W`` reduced feature map.
        probs: ``B x N x H x W`` class probabilities.

    Returns:
        ``B x N x C'`` centers; a class with zero total probability gets a
        zero center rather than a division error.
    """
    if feature.ndim != 4 or probs.ndim != 4:
        raise ValueError("class_centers: expected NCHW feature and probs")
    if feature.shape[0] != probs.shape[0] or feature.shape[2:] != probs.shape[2:]:
        raise ValueError(f"class_centers: feature {feature.shape} and probs {probs.shape} disagree")
    p = _flatten_spatial(probs)                                  # B x N x HW
    f = F.transpose(_flatten_spatial(feature), (0, 2, 1))       # B x HW x C'
    weighted = F.matmul(p, f)                                    # B x N x C'
    mass = F.sum_axis(p, axis=2)                                 # B x N
    return F.mul_rows(weighted, F.reciprocal(mass, eps))


def _check_attention_inputs(centers: Tensor, probs: Tensor) -> None:
    if centers.ndim != 3 or probs.ndim != 4:
        raise ValueError("class attention: expected B x N x C' centers and B x N x H x W probs")
    if centers.shape[:2] != probs.shape[:2]:
        raise ValueError(f"class attention: centers {centers.shape} vs probs {probs.shape}")


def class_attention_sum(centers: Tensor, probs: Tensor) -> Tensor:
    """Per-pixel convex combination of centers: ``B x C' x H x W``."""
    _check_attention_inputs(centers, probs)
    B, N, H, W = probs.shape
    ct = F.transpose(centers, (0, 2, 1))                         # B x C' x N
    out = F.matmul(ct, _flatten_spatial(probs))                  # B x C' x HW
    return F.reshape(out, (B, centers.shape[2], H, W))


def class_attention_concat(centers: Tensor, probs: Tensor) -> Tensor:
    """Per-pixel probability-scaled centers stacked class-major: ``B x N*C' x H x W``."""
    _check_attention_inputs(centers, probs)
    B, N, H, W = probs.shape
    C = centers.shape[2]
    # One outer product per (image, class): (C x 1) @ (1 x HW).
    col = F.reshape(centers, (B * N, C, 1))
    row = F.reshape(probs, (B * N, 1, H * W))
    return F.reshape(F.matmul(col, row), (B, N * C, H, W))


class ACFModule(Module):
    """Reduce, compute centers, attend, refine, and fuse with the reduced map.

    ``variant`` is one of ``"sum"``, ``"concat"`` or ``"center"`` (centers
    tiled to every pixel, no attention). ``norm=False`` drops batch norm from
    every 1x1 layer, leaving conv + ReLU.
    """

    def __init__(self, in_channels: int, reduced: int, num_classes: int, out_channels: int,
                 rng: np.random.Generator, variant: str = "sum", norm: bool = True):
        super().__init__()
        if variant not in ("sum", "concat", "center"):
            raise ValueError(f"unknown ACF variant {variant!r}")
        if reduced < 1:
            raise ValueError("reduced channel count must be >= 1")
        self.variant = variant
        self.num_classes = num_classes
        self.reduce = ConvBNReLU(in_channels, reduced, 1, rng, norm=norm)
        attn_channels = reduced if variant == "sum" else num_classes * reduced
        self.refine = ConvBNReLU(attn_channels, attn_channels, 1, rng, norm=norm) if variant != "center" else None
        self.fuse = ConvBNReLU(attn_channels + reduced, out_channels, 1, rng, norm=norm)

    def attentional_feature(self, reduced: Tensor, probs: Tensor) -> Tensor:
        centers = class_centers(reduced, probs)
        if self.variant == "sum":
            return self.refine(class_attention_sum(centers, probs))
        if self.variant == "concat":
            return self.refine(class_attention_concat(centers, probs))
        B, N, C = centers.shape
        H, W = reduced.shape[2:]
        return F.expand_spatial(F.reshape(centers, (B, N * C, 1, 1)), H, W)

    def forward(self, feature: Tensor, probs: Tensor) -> Tensor:
        reduced = self.reduce(feature)
        attn = self.attentional_feature(reduced, probs)
        return self.fuse(F.concat([attn, reduced], axis=1))
