#!/usr/bin/env python3
"""Convert a torchvision DenseNet-121 state dict into an extractor manifest.

The extractor only consumes the stem and the first dense block, so everything
past ``features.denseblock1`` is dropped. Accepts both the modern flat key
layout (``...denselayer1.norm1.weight``) and the legacy dotted one
(``...denselayer1.norm.1.weight``) found in older serialized files.

Usage:
    python scripts/convert_backbone_weights.py densenet121.pth \
        --out weights/densenet121_block1.manifest

The source file is typically produced with:
    import torch, torchvision
    model = torchvision.models.densenet121(weights="IMAGENET1K_V1")
    torch.save(model.state_dict(), "densenet121.pth")
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np
import torch

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from thawgan.extractor import (
    ExtractorSpec,
    build_extractor,
    expected_tensor_shapes,
    load_pretrained,
    unfreeze_order,
)
from thawgan.manifest import WeightManifest, save_manifest, validate_tensors

_STAT_KEYS = ("weight", "bias", "running_mean", "running_var")


def _normalize(key: str) -> str:
    # norm.1.weight -> norm1.weight, conv.2.weight -> conv2.weight
    return re.sub(r"\.(norm|conv)\.([12])\.", r".\1\2.", "." + key).lstrip(".")


def map_state_dict(state: dict) -> dict[str, np.ndarray]:
    spec = ExtractorSpec()
    out: dict[str, np.ndarray] = {}
    for key, value in state.items():
        key = _normalize(key)
        if key == "features.conv0.weight":
            name = "stem_conv.weight"
        elif key.startswith("features.norm0."):
            stat = key.rsplit(".", 1)[1]
            if stat not in _STAT_KEYS:
                continue
            name = f"stem_norm.{stat}"
        else:
            match = re.match(
                r"features\.denseblock1\.denselayer(\d+)\.(norm1|conv1|norm2|conv2)\.(\w+)", key
            )
            if not match:
                continue
            layer = int(match.group(1)) - 1
            stat = match.group(3)
            if layer >= spec.num_layers or stat not in _STAT_KEYS:
                continue
            name = f"dense.{layer}.{match.group(2)}.{stat}"
        out[name] = value.detach().cpu().numpy().astype(np.float32)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("state_dict", help="torch-saved DenseNet-121 state dict (.pth)")
    parser.add_argument(
        "--out", default="weights/densenet121_block1.manifest", help="output manifest path"
    )
    args = parser.parse_args(argv)

    state = torch.load(args.state_dict, map_location="cpu", weights_only=True)
    if isinstance(state, dict) and "state_dict" in state and not any(
        k.startswith("features.") for k in state
    ):
        state = state["state_dict"]

    tensors = map_state_dict(state)
    spec = ExtractorSpec()
    manifest = WeightManifest(
        tensors=tensors,
        unit_order=[u.name for u in unfreeze_order(spec)],
        metadata={
            "kind": "weights",
            "backbone": "densenet121_block1",
            "source": str(args.state_dict),
        },
    )
    validate_tensors(manifest, expected_tensor_shapes(spec))

    # prove the manifest round-trips into a live extractor before writing
    load_pretrained(build_extractor(), manifest)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_manifest(manifest, out)
    size = out.stat().st_size / 1e6
    print(f"wrote {len(tensors)} tensors ({size:.2f} MB) to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
