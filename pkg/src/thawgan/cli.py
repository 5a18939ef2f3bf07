"""Command line interface.

Subcommands: ``train`` runs one experiment from a key=value config file plus
overrides; ``eval`` scores a checkpoint on its held-out set; ``ablate`` runs a
variant matrix under one shared seed and plots the loss curves side by side;
``inspect-checkpoint`` summarizes a checkpoint or weight manifest.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, apply_assignments, apply_env, from_file
from .data import DataError
from .manifest import ManifestError, load_manifest
from .trainer import NumericAbortError, restore_trainer, train_once

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _split_assignments(items) -> list[tuple[str, str]]:
    pairs = []
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs.append((key, value))
    return pairs


def _load_config(args) -> ExperimentConfig:
    cfg = from_file(args.config) if args.config else ExperimentConfig()
    cfg = apply_env(cfg, os.environ)
    cfg = apply_assignments(cfg, _split_assignments(args.set), "--set")
    return cfg.validate()


def cmd_train(args) -> int:
    cfg = _load_config(args)
    report = train_once(cfg, verbose=not args.quiet)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_eval(args) -> int:
    trainer = restore_trainer(args.checkpoint)
    metrics = trainer.pipeline.evaluate()
    print(json.dumps({"checkpoint": str(args.checkpoint), "metrics": metrics}, indent=2))
    if args.samples:
        trainer.pipeline.write_samples(args.samples)
        print(f"wrote sample images to {args.samples}")
    return EXIT_OK


def _read_loss_curve(run_dir: Path, name: str) -> tuple[list[int], list[float]]:
    steps, values = [], []
    with open(run_dir / "losses.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["name"] == name:
                steps.append(int(row["step"]))
                values.append(float(row["value"]))
    return steps, values


def _plot_runs(runs: list[dict], out_png: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for run in runs:
        run_dir = Path(run["out_dir"])
        for axis, name in zip(axes, ("d", "g_total")):
            steps, values = _read_loss_curve(run_dir, name)
            axis.plot(steps, values, label=run["label"], linewidth=1.0)
    axes[0].set_title("discriminator loss")
    axes[1].set_title("generator loss")
    for axis in axes:
        axis.set_xlabel("step")
        axis.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def cmd_ablate(args) -> int:
    try:
        matrix = json.loads(Path(args.matrix).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read ablation matrix {args.matrix}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"ablation matrix {args.matrix} is not valid JSON: {exc}") from exc
    if not isinstance(matrix, dict) or not matrix.get("variants"):
        raise ConfigError("ablation matrix needs a 'variants' list (and optional 'base' dict)")

    base_pairs = [(k, str(v)) for k, v in matrix.get("base", {}).items()]
    base = apply_assignments(ExperimentConfig(), base_pairs, "matrix.base")
    base = apply_env(base, os.environ)
    base = apply_assignments(base, _split_assignments(args.set), "--set")

    out_root = Path(args.out)
    runs = []
    for i, variant in enumerate(matrix["variants"]):
        if not isinstance(variant, dict):
            raise ConfigError(f"variant {i} must be an object of config overrides")
        overrides = {k: v for k, v in variant.items() if k not in ("label", "seed")}
        cfg = apply_assignments(base, [(k, str(v)) for k, v in overrides.items()], f"variant {i}")
        label = str(variant.get("label") or cfg.variant_label())
        # every variant runs under the shared base seed so curves are comparable
        cfg = dataclasses.replace(cfg, seed=base.seed, out_dir=str(out_root / f"{i:02d}_{label}"))
        cfg.validate()
        print(f"[{i + 1}/{len(matrix['variants'])}] {label}")
        report = train_once(cfg, verbose=not args.quiet)
        report["label"] = label
        runs.append(report)

    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "ablation.json").write_text(json.dumps(runs, indent=2))
    _plot_runs(runs, out_root / "ablation_losses.png")

    metric_keys = sorted({k for run in runs for k in run["final_metrics"]} - {"count"})
    print(f"{'variant':<24} " + " ".join(f"{k:>14}" for k in metric_keys))
    for run in runs:
        cells = []
        for key in metric_keys:
            value = run["final_metrics"].get(key)
            cells.append(f"{value:>14.4f}" if isinstance(value, float) else f"{'-':>14}")
        print(f"{run['label']:<24} " + " ".join(cells))
    print(f"full reports in {out_root / 'ablation.json'}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    manifest = load_manifest(args.checkpoint)
    meta = manifest.metadata
    total_bytes = sum(t.nbytes for t in manifest.tensors.values())
    info = {
        "path": str(args.checkpoint),
        "kind": meta.get("kind", "weights"),
        "tensors": len(manifest.tensors),
        "megabytes": round(total_bytes / 1e6, 2),
        "unit_order": manifest.unit_order,
    }
    if meta.get("kind") == "checkpoint":
        freeze = meta.get("freeze_state", {})
        info.update(
            {
                "task": meta.get("task"),
                "epoch": meta.get("epoch"),
                "step": meta.get("step"),
                "unfrozen_count": freeze.get("unfrozen_count"),
                "thaw_history": freeze.get("history"),
                "config": meta.get("config"),
            }
        )
    else:
        info["metadata"] = meta
    if args.tensors:
        info["tensor_shapes"] = {
            name: list(manifest.tensors[name].shape) for name in sorted(manifest.tensors)
        }
    print(json.dumps(info, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thawgan",
        description="GAN training with a progressively thawed dense-block discriminator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one training experiment")
    train.add_argument("--config", help="key=value config file")
    train.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    train.add_argument("--quiet", action="store_true", help="suppress per-epoch logging")
    train.set_defaults(func=cmd_train)

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint on its held-out set")
    evaluate.add_argument("checkpoint", help="checkpoint file")
    evaluate.add_argument("--samples", help="directory for sample images")
    evaluate.set_defaults(func=cmd_eval)

    ablate = sub.add_parser("ablate", help="train a matrix of variants under one shared seed")
    ablate.add_argument("--matrix", required=True, help="JSON file with 'base' and 'variants'")
    ablate.add_argument("--out", required=True, help="output directory for all runs")
    ablate.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a base key")
    ablate.add_argument("--quiet", action="store_true", help="suppress per-epoch logging")
    ablate.set_defaults(func=cmd_ablate)

    inspect = sub.add_parser("inspect-checkpoint", help="summarize a checkpoint or manifest")
    inspect.add_argument("checkpoint", help="checkpoint or weight manifest file")
    inspect.add_argument("--tensors", action="store_true", help="list every tensor shape")
    inspect.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ManifestError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericAbortError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
