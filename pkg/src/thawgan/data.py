"""Image I/O, tensor conversion, bicubic rescaling, and desk-scale datasets.

Images travel as channel-last float64 arrays on [0, 1]; networks see
channel-first tensors on [-1, 1]. The bicubic resampler is written out
explicitly (Keys kernel, a = -0.5) so the degradation used to synthesize
super-resolution inputs is exactly reproducible: downscaling stretches the
kernel by the factor for antialiasing, edges clamp, and tap weights are
renormalized to sum to one.

The procedural texture sets exist so pipelines can run end to end without
external data: each index is generated from its own seed sequence, so a
dataset is a pure function of (kind, size, seed, index).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image


class DataError(Exception):
    """Raised when a dataset cannot be assembled from the given source."""


def derive_seeds(seed: int) -> dict[str, int]:
    """Independent named seeds fanned out from one experiment seed.

    The policy draw stream, batch sampler, weight init, and dataset contents
    each get their own stream so changing one cannot perturb the others.
    """
    names = ("policy", "sampler", "torch", "train_a", "train_b", "eval_a", "eval_b")
    state = np.random.SeedSequence(seed).generate_state(len(names))
    return {name: int(value) for name, value in zip(names, state)}


def array_to_tensor(arr: np.ndarray) -> torch.Tensor:
    """HWC float image on [0, 1] to CHW float32 tensor on [-1, 1]."""
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    t = torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))
    return t * 2.0 - 1.0


def tensor_to_array(t: torch.Tensor) -> np.ndarray:
    """CHW tensor on [-1, 1] to HWC float64 array clipped to [0, 1]."""
    if t.ndim != 3:
        raise ValueError(f"expected a CHW tensor, got shape {tuple(t.shape)}")
    arr = t.detach().cpu().numpy().astype(np.float64).transpose(1, 2, 0)
    return np.clip((arr + 1.0) / 2.0, 0.0, 1.0)


def stack_batch(arrays) -> torch.Tensor:
    return torch.stack([array_to_tensor(a) for a in arrays])


def cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Two-lobe cubic interpolation kernel on support (-2, 2)."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    out = np.zeros_like(x)
    near = x <= 1.0
    far = (x > 1.0) & (x < 2.0)
    out[near] = (a + 2.0) * x[near] ** 3 - (a + 3.0) * x[near] ** 2 + 1.0
    out[far] = a * x[far] ** 3 - 5.0 * a * x[far] ** 2 + 8.0 * a * x[far] - 4.0 * a
    return out


def _resample_matrix(in_size: int, out_size: int, scale: float) -> np.ndarray:
    """Row-stochastic matrix mapping in_size samples to out_size samples.

    ``scale`` is in/out; the kernel is stretched by max(scale, 1) so
    downscaling lowpasses. Source taps clamp to the edge.
    """
    stretch = max(scale, 1.0)
    support = 2.0 * stretch
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    for i in range(out_size):
        center = (i + 0.5) * scale - 0.5
        lo = int(np.floor(center - support + 1))
        hi = int(np.ceil(center + support - 1))
        taps = np.arange(lo, hi + 1)
        weights = cubic_kernel((taps - center) / stretch) / stretch
        keep = weights != 0.0
        taps, weights = taps[keep], weights[keep]
        weights = weights / weights.sum()
        np.add.at(matrix[i], np.clip(taps, 0, in_size - 1), weights)
    return matrix


def bicubic_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bicubic resample of an HW or HWC array to the given size."""
    arr = np.asarray(arr, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    in_h, in_w = arr.shape[:2]
    mh = _resample_matrix(in_h, out_h, in_h / out_h)
    mw = _resample_matrix(in_w, out_w, in_w / out_w)
    out = np.einsum("oi,ijc->ojc", mh, arr)
    out = np.einsum("oj,ijc->ioc", mw, out)
    return out[:, :, 0] if squeeze else out


def degrade(arr: np.ndarray, factor: int) -> np.ndarray:
    """Antialiased bicubic downscale by an integer factor."""
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[:2]
    if factor < 1 or h % factor or w % factor:
        raise ValueError(f"image {h}x{w} does not divide by factor {factor}")
    return bicubic_resize(arr, h // factor, w // factor)


def bicubic_upscale(arr: np.ndarray, factor: int) -> np.ndarray:
    """Plain bicubic upscale by an integer factor (the no-learning baseline)."""
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[:2]
    return bicubic_resize(arr, h * factor, w * factor)


class ProceduralTextures:
    """Deterministic synthetic texture set.

    Kinds: ``checker`` (random cell size, phase, and colors), ``stripes``
    (axis-aligned, random period, phase, and colors), ``noise`` (two octaves
    of bicubically upsampled value noise). Item ``i`` depends only on
    (seed, i), never on access order.
    """

    KINDS = ("checker", "stripes", "noise")

    def __init__(self, kind: str, size: int = 80, count: int = 32, seed: int = 0):
        if kind not in self.KINDS:
            raise DataError(f"unknown texture kind {kind!r}; expected one of {self.KINDS}")
        if size < 16:
            raise DataError(f"texture size {size} too small")
        self.kind = kind
        self.size = size
        self.count = count
        self.seed = seed
        self._cache: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return self.count

    def _two_colors(self, rng) -> tuple[np.ndarray, np.ndarray]:
        c0 = rng.uniform(0.0, 1.0, size=3)
        c1 = rng.uniform(0.0, 1.0, size=3)
        while np.abs(c0 - c1).max() < 0.25:  # keep the pattern visible
            c1 = rng.uniform(0.0, 1.0, size=3)
        return c0, c1

    def _checker(self, rng) -> np.ndarray:
        cell = int(rng.integers(4, max(5, self.size // 5) + 1))
        px = int(rng.integers(0, cell))
        py = int(rng.integers(0, cell))
        c0, c1 = self._two_colors(rng)
        yy = (np.arange(self.size) + py) // cell
        xx = (np.arange(self.size) + px) // cell
        mask = ((yy[:, None] + xx[None, :]) % 2).astype(np.float64)[:, :, None]
        return c0 * (1.0 - mask) + c1 * mask

    def _stripes(self, rng) -> np.ndarray:
        width = int(rng.integers(2, max(3, self.size // 6) + 1))
        phase = int(rng.integers(0, 2 * width))
        c0, c1 = self._two_colors(rng)
        axis = int(rng.integers(0, 2))
        coord = np.arange(self.size) + phase
        mask = ((coord // width) % 2).astype(np.float64)
        if axis == 0:
            field = np.repeat(mask[:, None], self.size, axis=1)
        else:
            field = np.repeat(mask[None, :], self.size, axis=0)
        return c0 * (1.0 - field[:, :, None]) + c1 * field[:, :, None]

    def _noise(self, rng) -> np.ndarray:
        coarse_grid = max(2, self.size // 8)
        fine_grid = max(2, self.size // 2)
        coarse = bicubic_resize(rng.uniform(0.0, 1.0, (coarse_grid, coarse_grid, 3)), self.size, self.size)
        fine = bicubic_resize(rng.uniform(0.0, 1.0, (fine_grid, fine_grid, 3)), self.size, self.size)
        return np.clip(0.75 * coarse + 0.25 * fine, 0.0, 1.0)

    def __getitem__(self, index: int) -> np.ndarray:
        if not 0 <= index < self.count:
            raise IndexError(index)
        if index not in self._cache:
            rng = np.random.default_rng([self.seed, index])
            self._cache[index] = getattr(self, "_" + self.kind)(rng)
        return self._cache[index]


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file as an HWC float64 RGB array on [0, 1]."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc


def save_image(arr: np.ndarray, path: str | Path) -> None:
    """Write an HWC float array on [0, 1] as an 8-bit PNG."""
    arr = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data).save(path)


class ImageFolderDataset:
    """All images directly inside one directory, in sorted filename order."""

    EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise DataError(f"dataset directory {self.root} does not exist")
        self.paths = sorted(
            p for p in self.root.iterdir() if p.suffix.lower() in self.EXTENSIONS
        )
        if not self.paths:
            raise DataError(f"dataset directory {self.root} holds no images")

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, index: int) -> np.ndarray:
        return load_image(self.paths[index])


def epoch_index_batches(
    rng: np.random.Generator, count: int, batch_size: int, steps: int
) -> list[list[int]]:
    """Index batches for one epoch, drawn from concatenated shuffles.

    The whole epoch is derived up front from the sampler stream, so restoring
    the stream at an epoch boundary reproduces the epoch exactly.
    """
    if count < 1:
        raise DataError("cannot sample from an empty dataset")
    order: list[int] = []
    batches = []
    for _ in range(steps):
        while len(order) < batch_size:
            order.extend(int(i) for i in rng.permutation(count))
        batches.append(order[:batch_size])
        order = order[batch_size:]
    return batches
