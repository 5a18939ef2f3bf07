#!/usr/bin/env python3
"""Write a randomly initialized extractor weight manifest.

Produces a correctly shaped stand-in for converted backbone weights so the
full pipeline (including the weights_path config key) can be exercised
without redistributing pretrained parameters.

Usage:
    python scripts/make_random_manifest.py --out weights/random.manifest --seed 0
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from thawgan.extractor import ExtractorSpec, build_extractor, expected_tensor_shapes, unfreeze_order
from thawgan.manifest import WeightManifest, save_manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="weights/random.manifest", help="output manifest path")
    parser.add_argument("--seed", type=int, default=0, help="initialization seed")
    parser.add_argument(
        "--backbone", default="densenet121_block1", help="registered backbone name"
    )
    args = parser.parse_args(argv)

    torch.manual_seed(args.seed)
    extractor = build_extractor(args.backbone)
    state = extractor.state_dict()
    tensors = {
        name: state[name].detach().cpu().numpy().copy()
        for name in expected_tensor_shapes(extractor.spec)
    }
    manifest = WeightManifest(
        tensors=tensors,
        unit_order=[u.name for u in unfreeze_order(ExtractorSpec())],
        metadata={"kind": "weights", "backbone": args.backbone, "seed": args.seed},
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_manifest(manifest, out)
    print(f"wrote {len(tensors)} tensors to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
