"""Spectral weight normalization via power iteration.

The leading singular value of the reshaped weight matrix is tracked with a
persistent left singular vector estimate; each training forward refines it by
one iteration. The returned weight is the raw weight divided by the sigma
estimate, with gradients flowing through the raw weight only.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F


def l2normalize(v: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    return v / (v.norm() + eps)


def power_iteration(weight_mat: torch.Tensor, u: torch.Tensor, n_iterations: int, eps: float):
    """Refine (u, v) estimates of the leading singular pair of a 2-d matrix."""
    v = l2normalize(torch.mv(weight_mat.t(), u), eps)
    for _ in range(n_iterations - 1):
        u = l2normalize(torch.mv(weight_mat, v), eps)
        v = l2normalize(torch.mv(weight_mat.t(), u), eps)
    u = l2normalize(torch.mv(weight_mat, v), eps)
    return u, v


def spectral_normalize(
    weight: torch.Tensor,
    u_buffer: torch.Tensor,
    n_iterations: int = 1,
    eps: float = 1e-12,
    update: bool = True,
) -> torch.Tensor:
    """Divide ``weight`` by its estimated leading singular value.

    ``u_buffer`` persists the left singular vector estimate between calls and
    is refreshed in place when ``update`` is set. The u and v estimates are
    treated as constants; gradients reach the raw weight only.
    """
    w = weight.reshape(weight.shape[0], -1)
    with torch.no_grad():
        u, v = power_iteration(w, u_buffer, n_iterations, eps)
        if update:
            u_buffer.copy_(u)
    sigma = torch.dot(u, torch.mv(w, v))
    return weight / sigma.clamp_min(eps)


class SNConv2d(nn.Conv2d):
    """Conv2d whose weight is spectrally normalized on every forward."""

    def __init__(self, *args, n_power_iterations: int = 1, sn_eps: float = 1e-12, **kwargs):
        super().__init__(*args, **kwargs)
        self.n_power_iterations = n_power_iterations
        self.sn_eps = sn_eps
        u = torch.randn(self.out_channels)
        self.register_buffer("weight_u", l2normalize(u, sn_eps))

    def current_sigma(self) -> torch.Tensor:
        """Sigma estimate for the stored u without advancing the iteration."""
        w = self.weight.detach().reshape(self.out_channels, -1)
        u, v = power_iteration(w, self.weight_u, self.n_power_iterations, self.sn_eps)
        return torch.dot(u, torch.mv(w, v))

    def forward(self, x):
        weight = spectral_normalize(
            self.weight, self.weight_u, self.n_power_iterations, self.sn_eps, update=self.training
        )
        return self._conv_forward(x, weight, self.bias)


def make_conv(
    in_channels: int,
    out_channels: int,
    kernel_size: int,
    stride: int = 1,
    padding: int = 0,
    bias: bool = True,
    spectral: bool = False,
) -> nn.Conv2d:
    """Plain or spectrally normalized convolution, chosen by flag."""
    cls = SNConv2d if spectral else nn.Conv2d
    return cls(in_channels, out_channels, kernel_size, stride=stride, padding=padding, bias=bias)
