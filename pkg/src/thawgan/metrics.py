"""Image fidelity metrics computed on numpy arrays.

Arrays are channel-last (H x W x 3) or single-channel (H x W) floats on a
[0, max_value] scale. PSNR is taken over all channels jointly; the structural
similarity index follows the classic single-scale recipe: luma only, an
11 x 11 Gaussian window with sigma 1.5, and stabilizers C1 = (0.01 L)^2,
C2 = (0.03 L)^2, evaluated where the window fits entirely inside the image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def _as_float_image(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] in (1, 3):
        return arr
    if arr.ndim == 2:
        return arr
    raise ValueError(f"expected HxW or HxWxC image with 1 or 3 channels, got shape {arr.shape}")


def _luma(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 2:
        return arr
    if arr.shape[2] == 1:
        return arr[:, :, 0]
    r, g, b = LUMA_WEIGHTS
    return r * arr[:, :, 0] + g * arr[:, :, 1] + b * arr[:, :, 2]


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


def psnr(reference, candidate, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in decibels.

    Parameters
    ----------
    reference : array_like
      Ground-truth image, H x W or H x W x C
    candidate : array_like
      Image under test, same shape as `reference`
    max_value : float, optional (default 1.0)
      Value range of the images

    Returns
    -------
    float
      PSNR in dB; ``math.inf`` when the images are identical
    """
    ref = _as_float_image(reference)
    out = _as_float_image(candidate)
    if ref.shape != out.shape:
        raise ValueError(f"image shapes differ: {ref.shape} vs {out.shape}")
    mse = float(np.mean((ref - out) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value**2 / mse)


def ssim(reference, candidate, max_value: float = 1.0) -> float:
    """Mean structural similarity index over the luma channel.

    Parameters
    ----------
    reference : array_like
      Ground-truth image, H x W or H x W x C
    candidate : array_like
      Image under test, same shape as `reference`
    max_value : float, optional (default 1.0)
      Value range of the images

    Returns
    -------
    float
      Mean SSIM over all fully interior window positions; exactly 1.0 when
      the images are bitwise identical
    """
    ref = _as_float_image(reference)
    out = _as_float_image(candidate)
    if ref.shape != out.shape:
        raise ValueError(f"image shapes differ: {ref.shape} vs {out.shape}")
    x = _luma(ref)
    y = _luma(out)
    window = _gaussian_window()
    if x.shape[0] < window.shape[0] or x.shape[1] < window.shape[1]:
        raise ValueError(
            f"image {x.shape} smaller than the {window.shape[0]}x{window.shape[1]} window"
        )
    c1 = (0.01 * max_value) ** 2
    c2 = (0.03 * max_value) ** 2

    mu_x = convolve2d(x, window, mode="valid")
    mu_y = convolve2d(y, window, mode="valid")
    # moments share one code path so identical inputs cancel exactly
    var_x = convolve2d(x * x, window, mode="valid") - mu_x * mu_x
    var_y = convolve2d(y * y, window, mode="valid") - mu_y * mu_y
    cov_xy = convolve2d(x * y, window, mode="valid") - mu_x * mu_y

    numerator = (2.0 * mu_x * mu_y + c1) * (2.0 * cov_xy + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(numerator / denominator))


@dataclass
class MetricReport:
    """Aggregate fidelity over an evaluation set."""

    psnr: float
    ssim: float
    count: int

    def to_dict(self) -> dict:
        return {"psnr": self.psnr, "ssim": self.ssim, "count": self.count}

    def to_json(self) -> str:
        d = self.to_dict()
        if math.isinf(d["psnr"]):
            d["psnr"] = "inf"
        return json.dumps(d, indent=2)


def evaluate_pairs(pairs, max_value: float = 1.0) -> MetricReport:
    """Average PSNR and SSIM over (reference, candidate) image pairs.

    A single identical pair drives the mean PSNR to infinity; that is
    reported as-is rather than clipped.
    """
    psnrs = []
    ssims = []
    for reference, candidate in pairs:
        psnrs.append(psnr(reference, candidate, max_value))
        ssims.append(ssim(reference, candidate, max_value))
    if not psnrs:
        raise ValueError("no image pairs to evaluate")
    return MetricReport(
        psnr=float(np.mean(psnrs)), ssim=float(np.mean(ssims)), count=len(psnrs)
    )
