"""Perceptual discriminator: pretrained dense-block features plus a task head.

Two head families sit on the 256-channel quarter-resolution feature map. The
super-resolution head tapers 256 -> 128 -> 64 -> 32 with stride-2 convolutions,
pools globally, and finishes with two 1x1 convolutions. The translation head
tapers 256 -> 128 -> 64 -> 32 -> 16 with stride-2 convolutions and scores
overlapping patches with a final 4x4 convolution, averaging the patch logits.

Conditional (paired) discrimination runs the shared extractor on the condition
image as well and concatenates both feature maps on channels, doubling the
head input width.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .extractor import (
    DenseFeatureExtractor,
    SpatialSizeError,
    build_extractor,
    conv_out,
)
from .spectral import make_conv

HEAD_KINDS = ("sr", "translation")


class SuperResolutionHead(nn.Module):
    """Three stride-2 3x3 convolutions, global average pooling, two 1x1 convolutions.

    Every convolution except the final logit layer is followed by a leaky
    rectifier and, when enabled, spectral normalization.
    """

    def __init__(self, in_channels: int, spectral: bool = True, negative_slope: float = 0.2):
        super().__init__()
        self.negative_slope = negative_slope
        self.conv1 = make_conv(in_channels, 128, 3, stride=2, padding=1, spectral=spectral)
        self.conv2 = make_conv(128, 64, 3, stride=2, padding=1, spectral=spectral)
        self.conv3 = make_conv(64, 32, 3, stride=2, padding=1, spectral=spectral)
        self.fc1 = make_conv(32, 16, 1, spectral=spectral)
        # the logit layer stays plain: no rescaling, no activation
        self.fc2 = nn.Conv2d(16, 1, 1)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        y = features
        for conv in (self.conv1, self.conv2, self.conv3):
            y = F.leaky_relu(conv(y), self.negative_slope)
        y = F.adaptive_avg_pool2d(y, 1)
        y = F.leaky_relu(self.fc1(y), self.negative_slope)
        return self.fc2(y).flatten(1).squeeze(1)


class TranslationHead(nn.Module):
    """Four stride-2 3x3 convolutions and a 4x4 patch convolution.

    Each convolution, the patch layer included, is followed by a leaky
    rectifier; the patch logit map is averaged into one logit per image.
    Needs a feature map of at least 17x17 so the patch layer sees a 2x2 input.
    """

    MIN_FEATURE = 17

    def __init__(self, in_channels: int, spectral: bool = True, negative_slope: float = 0.2):
        super().__init__()
        self.negative_slope = negative_slope
        self.conv1 = make_conv(in_channels, 128, 3, stride=2, padding=1, spectral=spectral)
        self.conv2 = make_conv(128, 64, 3, stride=2, padding=1, spectral=spectral)
        self.conv3 = make_conv(64, 32, 3, stride=2, padding=1, spectral=spectral)
        self.conv4 = make_conv(32, 16, 3, stride=2, padding=1, spectral=spectral)
        self.patch = make_conv(16, 1, 4, stride=1, padding=1, spectral=spectral)

    def _check_size(self, h: int, w: int) -> None:
        for size, axis in ((h, "height"), (w, "width")):
            out = size
            for _ in range(4):
                out = conv_out(out, 3, 2, 1)
            out = conv_out(out, 4, 1, 1)
            if out < 1:
                raise SpatialSizeError(
                    f"feature {axis} {size} too small for the patch head; "
                    f"needs at least {self.MIN_FEATURE} (inputs of 65 pixels and up)"
                )

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        self._check_size(features.shape[-2], features.shape[-1])
        y = features
        for conv in (self.conv1, self.conv2, self.conv3, self.conv4, self.patch):
            y = F.leaky_relu(conv(y), self.negative_slope)
        return y.mean(dim=(1, 2, 3))


def _build_head(kind: str, in_channels: int, spectral: bool, negative_slope: float) -> nn.Module:
    if kind == "sr":
        return SuperResolutionHead(in_channels, spectral, negative_slope)
    if kind == "translation":
        return TranslationHead(in_channels, spectral, negative_slope)
    raise ValueError(f"unknown head kind {kind!r}; expected one of {HEAD_KINDS}")


class PerceptualDiscriminator(nn.Module):
    """Dense-block feature extractor with a task head returning one logit per image."""

    def __init__(
        self,
        extractor: DenseFeatureExtractor,
        head: str = "sr",
        spectral: bool = True,
        paired: bool = False,
        negative_slope: float = 0.2,
    ):
        super().__init__()
        self.extractor = extractor
        self.paired = paired
        self.head_kind = head
        in_channels = extractor.out_channels * (2 if paired else 1)
        self.head = _build_head(head, in_channels, spectral, negative_slope)

    def features(self, image: torch.Tensor, condition: torch.Tensor | None = None) -> torch.Tensor:
        feat = self.extractor(image)
        if self.paired:
            if condition is None:
                raise ValueError("paired discriminator needs a condition image")
            if condition.shape[-2:] != image.shape[-2:]:
                raise ValueError(
                    f"condition size {tuple(condition.shape[-2:])} does not match "
                    f"candidate size {tuple(image.shape[-2:])}"
                )
            feat = torch.cat([self.extractor(condition), feat], dim=1)
        elif condition is not None:
            raise ValueError("this discriminator is unconditional; drop the condition image")
        return feat

    def forward(self, image: torch.Tensor, condition: torch.Tensor | None = None) -> torch.Tensor:
        return self.head(self.features(image, condition))

    def discriminate(self, image: torch.Tensor, condition: torch.Tensor | None = None) -> torch.Tensor:
        """Probability-like scores in (0, 1)."""
        return torch.sigmoid(self.forward(image, condition))


def build_discriminator(
    head: str = "sr",
    backbone: str = "densenet121_block1",
    weights=None,
    spectral: bool = True,
    paired: bool = False,
    negative_slope: float = 0.2,
) -> PerceptualDiscriminator:
    extractor = build_extractor(backbone, weights)
    return PerceptualDiscriminator(
        extractor, head=head, spectral=spectral, paired=paired, negative_slope=negative_slope
    )
