"""Adversarial and reconstruction losses, written in logit space.

The sigmoid cross-entropies are expressed through softplus so no probability
is ever materialized: -log sigmoid(z) == softplus(-z) and
-log(1 - sigmoid(z)) == softplus(z). At zero logits (score one half) the
discriminator loss sits at 2 ln 2 and the generator term at ln 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch.nn import functional as F


def discriminator_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    """-E[log D(real)] - E[log(1 - D(fake))], from raw logits."""
    return F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean()


def generator_adversarial_loss(fake_logits: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator term -E[log D(fake)], from raw logits."""
    return F.softplus(-fake_logits).mean()


def pixel_loss(output: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute error between a generated image and its reference."""
    return F.l1_loss(output, target)


def cycle_consistency_loss(reconstructed: torch.Tensor, original: torch.Tensor) -> torch.Tensor:
    """Mean absolute error after a round trip through both translators."""
    return F.l1_loss(reconstructed, original)


@dataclass(frozen=True)
class LossWeights:
    """Relative weights of the generator objective terms.

    Task defaults differ: super-resolution leans on the pixel term with a
    small adversarial weight, paired translation weights the pixel term at
    100, and unpaired translation weights the cycle term at 10.
    """

    adversarial: float = 1.0
    pixel: float = 0.0
    cycle: float = 0.0

    def __post_init__(self):
        for name in ("adversarial", "pixel", "cycle"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be nonnegative")
