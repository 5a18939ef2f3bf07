"""Desk-scale generators for the three task pipelines.

All generators take and return tanh-range images in [-1, 1]. They are sized
to train on a CPU in minutes: a pixel-shuffle upsampler for 4x
super-resolution, a two-level U-Net for paired translation, and a small
residual translator for unpaired translation.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F


class ResidualBlock(nn.Module):
    """Two 3x3 convolutions with an additive skip; no normalization."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        y = self.conv2(F.leaky_relu(self.conv1(x), 0.2))
        return x + y


class SuperResolutionGenerator(nn.Module):
    """Residual trunk plus pixel-shuffle upsampling by a power-of-two factor."""

    def __init__(self, factor: int = 4, base: int = 32, num_blocks: int = 4, channels: int = 3):
        super().__init__()
        if factor < 2 or factor & (factor - 1):
            raise ValueError(f"upscale factor must be a power of two, got {factor}")
        self.factor = factor
        self.entry = nn.Conv2d(channels, base, 3, padding=1)
        self.blocks = nn.Sequential(*[ResidualBlock(base) for _ in range(num_blocks)])
        self.mid = nn.Conv2d(base, base, 3, padding=1)
        stages = []
        f = factor
        while f > 1:
            stages += [nn.Conv2d(base, base * 4, 3, padding=1), nn.PixelShuffle(2)]
            f //= 2
        self.upsample = nn.Sequential(*stages)
        self.exit = nn.Conv2d(base, channels, 3, padding=1)

    def forward(self, x):
        e = F.leaky_relu(self.entry(x), 0.2)
        y = self.mid(self.blocks(e)) + e
        for stage in self.upsample:
            y = stage(y)
            if isinstance(stage, nn.PixelShuffle):
                y = F.leaky_relu(y, 0.2)
        return torch.tanh(self.exit(y))


class UNetTranslator(nn.Module):
    """Two-level U-Net with a skip from the first encoder stage."""

    def __init__(self, channels: int = 3, base: int = 32):
        super().__init__()
        self.enc1 = nn.Conv2d(channels, base, 4, stride=2, padding=1)
        self.enc2 = nn.Conv2d(base, base * 2, 4, stride=2, padding=1)
        self.mid = nn.Conv2d(base * 2, base * 2, 3, padding=1)
        self.dec2 = nn.ConvTranspose2d(base * 2, base, 4, stride=2, padding=1)
        self.dec1 = nn.ConvTranspose2d(base * 2, base // 2, 4, stride=2, padding=1)
        self.exit = nn.Conv2d(base // 2, channels, 3, padding=1)

    def forward(self, x):
        if x.shape[-2] % 4 or x.shape[-1] % 4:
            raise ValueError(
                f"input size {tuple(x.shape[-2:])} must divide by 4 for the U-Net"
            )
        e1 = F.leaky_relu(self.enc1(x), 0.2)
        e2 = F.leaky_relu(self.enc2(e1), 0.2)
        m = F.leaky_relu(self.mid(e2), 0.2)
        d2 = F.leaky_relu(self.dec2(m), 0.2)
        d1 = F.leaky_relu(self.dec1(torch.cat([d2, e1], dim=1)), 0.2)
        return torch.tanh(self.exit(d1))


class _InResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = nn.InstanceNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = nn.InstanceNorm2d(channels)

    def forward(self, x):
        y = F.relu(self.norm1(self.conv1(x)))
        return x + self.norm2(self.conv2(y))


class ResidualTranslator(nn.Module):
    """Small instance-normalized encoder/decoder for unpaired translation."""

    def __init__(self, channels: int = 3, base: int = 16, num_blocks: int = 2):
        super().__init__()
        self.entry = nn.Conv2d(channels, base, 7, padding=3)
        self.norm_e = nn.InstanceNorm2d(base)
        self.down1 = nn.Conv2d(base, base * 2, 3, stride=2, padding=1)
        self.norm_d1 = nn.InstanceNorm2d(base * 2)
        self.down2 = nn.Conv2d(base * 2, base * 4, 3, stride=2, padding=1)
        self.norm_d2 = nn.InstanceNorm2d(base * 4)
        self.blocks = nn.Sequential(*[_InResidualBlock(base * 4) for _ in range(num_blocks)])
        self.up1 = nn.ConvTranspose2d(base * 4, base * 2, 4, stride=2, padding=1)
        self.norm_u1 = nn.InstanceNorm2d(base * 2)
        self.up2 = nn.ConvTranspose2d(base * 2, base, 4, stride=2, padding=1)
        self.norm_u2 = nn.InstanceNorm2d(base)
        self.exit = nn.Conv2d(base, channels, 7, padding=3)

    def forward(self, x):
        if x.shape[-2] % 4 or x.shape[-1] % 4:
            raise ValueError(
                f"input size {tuple(x.shape[-2:])} must divide by 4 for the translator"
            )
        y = F.relu(self.norm_e(self.entry(x)))
        y = F.relu(self.norm_d1(self.down1(y)))
        y = F.relu(self.norm_d2(self.down2(y)))
        y = self.blocks(y)
        y = F.relu(self.norm_u1(self.up1(y)))
        y = F.relu(self.norm_u2(self.up2(y)))
        return torch.tanh(self.exit(y))
