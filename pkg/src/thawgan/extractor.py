"""Pretrained dense-block feature extractor and its unfreeze bookkeeping.

The extractor is the stem plus first dense block of a 121-layer densely
connected classifier: a 7x7 stride-2 convolution into 64 channels, a 3x3
stride-2 max pool, then six dense layers that each append 32 channels through
a 1x1 bottleneck and a 3x3 convolution. The dense concatenation of the stem
output and all six layer outputs gives 256 channels at one quarter of the
input resolution.

Thawing granularity is one convolution together with the affine weights of
the normalization attached to it. Walking from the head end back to the
input, each dense layer contributes its 3x3 and then its 1x1 unit, and the
stem convolution comes last: 13 units in total for the default layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .manifest import WeightManifest, load_manifest, validate_tensors

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class SpatialSizeError(ValueError):
    """Input too small for a convolution chain to leave a nonempty map."""


def conv_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


@dataclass(frozen=True)
class ExtractorSpec:
    """Structural parameters of the stem-plus-one-dense-block extractor."""

    in_channels: int = 3
    stem_channels: int = 64
    growth_rate: int = 32
    bn_size: int = 4
    num_layers: int = 6

    @property
    def out_channels(self) -> int:
        return self.stem_channels + self.num_layers * self.growth_rate

    @property
    def num_units(self) -> int:
        return 2 * self.num_layers + 1


@dataclass(frozen=True)
class UnfreezeUnit:
    """One thawable group: a convolution and its normalization affine."""

    index: int
    name: str
    param_names: tuple[str, ...]


@dataclass
class FreezeState:
    """How far thawing has progressed, plus a log of when each unit opened."""

    unfrozen_count: int = 0
    history: list = field(default_factory=list)

    def record(self, epoch: int, unit_names: list[str]) -> None:
        self.history.append({"epoch": epoch, "units": list(unit_names)})

    def to_dict(self) -> dict:
        return {"unfrozen_count": self.unfrozen_count, "history": list(self.history)}

    @classmethod
    def from_dict(cls, d: dict) -> "FreezeState":
        return cls(unfrozen_count=int(d["unfrozen_count"]), history=list(d.get("history", [])))


def unfreeze_order(spec: ExtractorSpec = ExtractorSpec()) -> list[UnfreezeUnit]:
    """Units listed nearest-to-head first.

    Unit 0 is the 3x3 convolution of the last dense layer; the stem 7x7 is
    thawed last. Each unit carries its convolution weight and the affine pair
    of the normalization it is wired to (the preceding norm for dense convs,
    the following norm for the stem).
    """
    units = []
    idx = 0
    for layer in range(spec.num_layers - 1, -1, -1):
        units.append(
            UnfreezeUnit(
                idx,
                f"dense{layer + 1}_conv3x3",
                (
                    f"dense.{layer}.conv2.weight",
                    f"dense.{layer}.norm2.weight",
                    f"dense.{layer}.norm2.bias",
                ),
            )
        )
        idx += 1
        units.append(
            UnfreezeUnit(
                idx,
                f"dense{layer + 1}_conv1x1",
                (
                    f"dense.{layer}.conv1.weight",
                    f"dense.{layer}.norm1.weight",
                    f"dense.{layer}.norm1.bias",
                ),
            )
        )
        idx += 1
    units.append(
        UnfreezeUnit(
            idx,
            "stem_conv7x7",
            ("stem_conv.weight", "stem_norm.weight", "stem_norm.bias"),
        )
    )
    return units


class _DenseLayer(nn.Module):
    def __init__(self, in_channels: int, growth_rate: int, bn_size: int):
        super().__init__()
        inter = bn_size * growth_rate
        self.norm1 = nn.BatchNorm2d(in_channels)
        self.conv1 = nn.Conv2d(in_channels, inter, kernel_size=1, stride=1, bias=False)
        self.norm2 = nn.BatchNorm2d(inter)
        self.conv2 = nn.Conv2d(inter, growth_rate, kernel_size=3, stride=1, padding=1, bias=False)

    def forward(self, x):
        out = self.conv1(F.relu(self.norm1(x)))
        out = self.conv2(F.relu(self.norm2(out)))
        return out


class DenseFeatureExtractor(nn.Module):
    """Stem plus one dense block, emitting the dense concatenation.

    Takes tanh-range images in [-1, 1]; a fixed affine maps them onto the
    statistics the backbone was pretrained with. Normalization layers always
    run with stored statistics, so batches never leak into them; their affine
    weights learn only while the owning unit is thawed.
    """

    def __init__(self, spec: ExtractorSpec = ExtractorSpec()):
        super().__init__()
        self.spec = spec
        self.stem_conv = nn.Conv2d(
            spec.in_channels, spec.stem_channels, kernel_size=7, stride=2, padding=3, bias=False
        )
        self.stem_norm = nn.BatchNorm2d(spec.stem_channels)
        self.dense = nn.ModuleList()
        channels = spec.stem_channels
        for _ in range(spec.num_layers):
            self.dense.append(_DenseLayer(channels, spec.growth_rate, spec.bn_size))
            channels += spec.growth_rate
        mean = torch.tensor(IMAGENET_MEAN).view(1, -1, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(1, -1, 1, 1)
        self.register_buffer("in_scale", 0.5 / std)
        self.register_buffer("in_shift", (0.5 - mean) / std)
        for param in self.parameters():
            param.requires_grad = False
        self.train()

    def train(self, mode: bool = True):
        # convolutions may train; batch norm keeps its stored statistics
        super().train(mode)
        for mod in self.modules():
            if isinstance(mod, nn.BatchNorm2d):
                mod.eval()
        return self

    @property
    def out_channels(self) -> int:
        return self.spec.out_channels

    def feature_shape(self, height: int, width: int) -> tuple[int, int, int]:
        """Exact output shape for an input of the given spatial size."""
        if height < 1 or width < 1:
            raise SpatialSizeError(f"input {height}x{width} is empty")
        h = conv_out(conv_out(height, 7, 2, 3), 3, 2, 1)
        w = conv_out(conv_out(width, 7, 2, 3), 3, 2, 1)
        if h < 1 or w < 1:
            raise SpatialSizeError(
                f"input {height}x{width} collapses to nothing inside the extractor"
            )
        return (self.spec.out_channels, h, w)

    def normalize(self, x):
        return x * self.in_scale + self.in_shift

    def forward(self, x):
        self.feature_shape(x.shape[-2], x.shape[-1])
        x = self.normalize(x)
        out = F.relu(self.stem_norm(self.stem_conv(x)))
        out = F.max_pool2d(out, kernel_size=3, stride=2, padding=1)
        features = [out]
        for layer in self.dense:
            features.append(layer(torch.cat(features, dim=1)))
        return torch.cat(features, dim=1)


def apply_freeze(extractor: DenseFeatureExtractor, unfrozen_count: int) -> list[UnfreezeUnit]:
    """Mark the first ``unfrozen_count`` units trainable, freeze the rest.

    Returns the thawed units, nearest-to-head first.
    """
    units = unfreeze_order(extractor.spec)
    if not 0 <= unfrozen_count <= len(units):
        raise ValueError(
            f"unfrozen_count {unfrozen_count} out of range for {len(units)} units"
        )
    thawed = set()
    for unit in units[:unfrozen_count]:
        thawed.update(unit.param_names)
    for name, param in extractor.named_parameters():
        param.requires_grad = name in thawed
    return units[:unfrozen_count]


def unit_parameters(extractor: DenseFeatureExtractor, unit: UnfreezeUnit) -> list[nn.Parameter]:
    """The live parameter tensors belonging to one unit."""
    lookup = dict(extractor.named_parameters())
    return [lookup[name] for name in unit.param_names]


def expected_tensor_shapes(spec: ExtractorSpec = ExtractorSpec()) -> dict[str, tuple]:
    """Tensor names and shapes a pretrained manifest must provide.

    Running statistics are included; step counters are not.
    """
    shapes: dict[str, tuple] = {
        "stem_conv.weight": (spec.stem_channels, spec.in_channels, 7, 7),
        "stem_norm.weight": (spec.stem_channels,),
        "stem_norm.bias": (spec.stem_channels,),
        "stem_norm.running_mean": (spec.stem_channels,),
        "stem_norm.running_var": (spec.stem_channels,),
    }
    inter = spec.bn_size * spec.growth_rate
    channels = spec.stem_channels
    for j in range(spec.num_layers):
        prefix = f"dense.{j}"
        shapes[f"{prefix}.norm1.weight"] = (channels,)
        shapes[f"{prefix}.norm1.bias"] = (channels,)
        shapes[f"{prefix}.norm1.running_mean"] = (channels,)
        shapes[f"{prefix}.norm1.running_var"] = (channels,)
        shapes[f"{prefix}.conv1.weight"] = (inter, channels, 1, 1)
        shapes[f"{prefix}.norm2.weight"] = (inter,)
        shapes[f"{prefix}.norm2.bias"] = (inter,)
        shapes[f"{prefix}.norm2.running_mean"] = (inter,)
        shapes[f"{prefix}.norm2.running_var"] = (inter,)
        shapes[f"{prefix}.conv2.weight"] = (spec.growth_rate, inter, 3, 3)
        channels += spec.growth_rate
    return shapes


def load_pretrained(extractor: DenseFeatureExtractor, manifest: WeightManifest) -> None:
    """Load manifest tensors into the extractor after shape validation."""
    expected = expected_tensor_shapes(extractor.spec)
    validate_tensors(manifest, expected)
    state = {
        name: torch.as_tensor(np.ascontiguousarray(manifest.tensors[name]), dtype=torch.float32)
        for name in expected
    }
    result = extractor.load_state_dict(state, strict=False)
    if result.unexpected_keys:
        raise KeyError(f"unexpected tensors for extractor: {result.unexpected_keys}")


_BACKBONES: dict = {}


def register_backbone(name: str):
    def deco(builder):
        _BACKBONES[name] = builder
        return builder

    return deco


@register_backbone("densenet121_block1")
def _densenet121_block1() -> DenseFeatureExtractor:
    return DenseFeatureExtractor(ExtractorSpec())


def available_backbones() -> list[str]:
    return sorted(_BACKBONES)


def build_extractor(
    backbone: str = "densenet121_block1",
    weights: WeightManifest | str | None = None,
) -> DenseFeatureExtractor:
    """Construct a registered backbone, optionally loading pretrained weights.

    The result starts fully frozen. Without a manifest the extractor keeps its
    random initialization, which is enough for structural tests and ablations.
    """
    if backbone not in _BACKBONES:
        raise KeyError(
            f"unknown backbone {backbone!r}; available: {', '.join(available_backbones())}"
        )
    extractor = _BACKBONES[backbone]()
    if weights is not None:
        manifest = weights if isinstance(weights, WeightManifest) else load_manifest(weights)
        load_pretrained(extractor, manifest)
    apply_freeze(extractor, 0)
    return extractor
