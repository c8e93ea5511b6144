"""Coarse-to-fine segmentation network with an optional ACF refinement stage."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .acf import ACFModule
from .autodiff import Conv2d, ConvBNReLU, Module, Tensor
from .autodiff import functional as F

VARIANTS = ("none", "center-only", "concat", "sum")
OUTPUT_STRIDE = 8
PAPER_ASPP_DILATIONS = (12, 24, 36)


@dataclass
class NetworkConfig:
    num_classes: int = 4
    base_channels: int = 16
    reduced_channels: int = 32
    head_channels: int = 32
    use_aspp: bool = False
    aspp_dilations: Tuple[int, ...] = (2, 4, 6)
    aspp_channels: int = 32
    variant: str = "sum"
    output_stride: int = OUTPUT_STRIDE

    def __post_init__(self):
        self.aspp_dilations = tuple(int(d) for d in self.aspp_dilations)
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.reduced_channels < 1 or self.base_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.output_stride != OUTPUT_STRIDE:
            raise ValueError(f"output_stride is fixed at {OUTPUT_STRIDE}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.use_aspp and len(self.aspp_dilations) != 3:
            raise ValueError("ASPP needs exactly three dilation rates (plus the 1x1 branch)")


@dataclass
class ForwardOutputs:
    aux: Tensor
    coarse: Tensor
    fine: Optional[Tensor] = None
    # Feature-resolution intermediates, kept for analysis.
    extras: Dict[str, Tensor] = field(default_factory=dict)


class Backbone(Module):
    """Four conv stages: 1/8 resolution after stage 2, then dilation 2 and 4.

    Returns the stage-3 output (auxiliary branch) and the stage-4 output.
    """

    def __init__(self, base: int, rng: np.random.Generator):
        super().__init__()
        c1, c2, c3, c4 = base, 2 * base, 4 * base, 4 * base
        self.stage1 = [ConvBNReLU(3, c1, 3, rng, stride=2), ConvBNReLU(c1, c1, 3, rng, stride=2)]
        self.stage2 = [ConvBNReLU(c1, c2, 3, rng, stride=2), ConvBNReLU(c2, c2, 3, rng)]
        self.stage3 = [ConvBNReLU(c2, c3, 3, rng, dilation=2), ConvBNReLU(c3, c3, 3, rng, dilation=2)]
        self.stage4 = [ConvBNReLU(c3, c4, 3, rng, dilation=4), ConvBNReLU(c4, c4, 3, rng, dilation=4)]
        self.mid_channels, self.out_channels = c3, c4

    def forward(self, x: Tensor):
        for layer in self.stage1 + self.stage2 + self.stage3:
            x = layer(x)
        mid = x
        for layer in self.stage4:
            x = layer(x)
        return mid, x


class ASPP(Module):
    """A 1x1 branch and three dilated 3x3 branches, concatenated and projected."""

    def __init__(self, in_channels: int, channels: int, dilations, rng: np.random.Generator):
        super().__init__()
        self.dilations = tuple(dilations)
        self.branches = [ConvBNReLU(in_channels, channels, 1, rng)] + [
            ConvBNReLU(in_channels, channels, 3, rng, dilation=d) for d in self.dilations
        ]
        self.project = ConvBNReLU(4 * channels, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        h, w = x.shape[2:]
        largest = max(self.dilations)
        if largest >= h or largest >= w:
            raise ValueError(
                f"ASPP dilation {largest} reaches past a {h}x{w} feature map; "
                f"lower the ASPP dilations below {min(h, w)} or use larger inputs"
            )
        return self.project(F.concat([b(x) for b in self.branches], axis=1))


class SegHead(Module):
    """3x3 conv-BN-ReLU then a 1x1 classifier."""

    def __init__(self, in_channels: int, mid: int, num_classes: int, rng: np.random.Generator):
        super().__init__()
        self.conv = ConvBNReLU(in_channels, mid, 3, rng)
        self.cls = Conv2d(mid, num_classes, 1, rng)

    def features(self, x: Tensor) -> Tensor:
        return self.conv(x)

    def forward(self, x: Tensor) -> Tensor:
        return self.cls(self.conv(x))


class ACFNet(Module):
    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        n = config.num_classes
        self.backbone = Backbone(config.base_channels, rng)
        feat = self.backbone.out_channels
        self.aspp = None
        if config.use_aspp:
            self.aspp = ASPP(feat, config.aspp_channels, config.aspp_dilations, rng)
            feat = config.aspp_channels
        self.aux_head = SegHead(self.backbone.mid_channels, config.head_channels, n, rng)
        self.coarse_head = SegHead(feat, config.head_channels, n, rng)
        self.acf = None
        self.fine_cls = None
        if config.variant != "none":
            kind = "center" if config.variant == "center-only" else config.variant
            c = config.reduced_channels
            self.acf = ACFModule(feat, c, n, c, rng, variant=kind)
            self.fine_cls = Conv2d(c, n, 1, rng)

    def forward(self, image: Tensor, keep_features: bool = False) -> ForwardOutputs:
        if image.ndim != 4 or image.shape[1] != 3:
            raise ValueError(f"expected B x 3 x H x W image, got {image.shape}")
        H, W = image.shape[2:]
        if H % OUTPUT_STRIDE or W % OUTPUT_STRIDE:
            raise ValueError(f"image size {H}x{W} must be divisible by {OUTPUT_STRIDE}")
        mid, top = self.backbone(image)
        base = self.aspp(top) if self.aspp is not None else top
        aux = self.aux_head(mid)
        head_feat = self.coarse_head.features(base)
        coarse = self.coarse_head.cls(head_feat)
        extras: Dict[str, Tensor] = {}
        if keep_features:
            extras["coarse_feature"] = base
            extras["coarse_logits"] = coarse
        fine = None
        if self.acf is not None:
            probs = F.softmax(coarse, axis=1)
            fused = self.acf(base, probs)
            fine = F.upsample_bilinear(self.fine_cls(fused), H, W)
            if keep_features:
                extras["fine_feature"] = fused
                extras["probs"] = probs
        return ForwardOutputs(
            aux=F.upsample_bilinear(aux, H, W),
            coarse=F.upsample_bilinear(coarse, H, W),
            fine=fine,
            extras=extras,
        )

    def predict_logits(self, image: Tensor) -> Tensor:
        """Final logits: fine when the ACF stage exists, coarse otherwise."""
        out = self.forward(image)
        return out.fine if out.fine is not None else out.coarse


def build_network(config: NetworkConfig, seed: int = 0) -> ACFNet:
    return ACFNet(config, np.random.default_rng(seed))
