"""Training loop: alternating updates, thaw scheduling, checkpoints, logging.

One step is one discriminator update followed by one generator update on the
same batch. The discriminator optimizer holds two groups: task heads at the
head learning rate and thawed extractor units at the (much smaller) extractor
learning rate; the extractor group grows as the schedule opens units. All
randomness flows from named streams fanned out of the experiment seed, and a
checkpoint restores every stream, so a resumed run continues the original
bit for bit.

Checkpoints reuse the weight-manifest container: module tensors under
``model.<role>.*``, first and second Adam moments under ``optim.{d,g}.*``,
the torch RNG state as a byte tensor, and everything scalar (config, thaw
state, numpy RNG states, Adam step counts) in the JSON metadata.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .config import ExperimentConfig, from_dict
from .data import derive_seeds
from .extractor import FreezeState, apply_freeze, unfreeze_order, unit_parameters
from .manifest import WeightManifest, load_manifest, save_manifest
from .scheduler import UnfreezePolicy, step_epoch
from .tasks import build_pipeline


class NumericAbortError(RuntimeError):
    """A training loss left the finite range."""

    def __init__(self, name: str, value: float, epoch: int, step: int):
        self.name = name
        self.value = value
        self.epoch = epoch
        self.step = step
        super().__init__(
            f"loss {name!r} became {value} at epoch {epoch}, step {step}; run aborted"
        )

    def to_dict(self) -> dict:
        return {"name": self.name, "value": repr(self.value), "epoch": self.epoch, "step": self.step}


class Trainer:
    def __init__(self, cfg: ExperimentConfig, pipeline=None, verbose: bool = False):
        self.cfg = cfg.validate()
        self.verbose = verbose
        self.pipeline = pipeline if pipeline is not None else build_pipeline(cfg)
        self.policy = UnfreezePolicy(cfg.mode, cfg.unfreeze_threshold)
        self.freeze_state = FreezeState()
        seeds = derive_seeds(cfg.seed)
        self.policy_rng = np.random.default_rng(seeds["policy"])
        self.sampler_rng = np.random.default_rng(seeds["sampler"])
        self.epoch = 0
        self.global_step = 0
        self.loss_rows: list[tuple] = []

        first = next(iter(self.pipeline.discriminators.values()))
        self.units = unfreeze_order(first.extractor.spec)

        g_params = [p for g in self.pipeline.generators.values() for p in g.parameters()]
        self.g_opt = torch.optim.Adam(
            g_params, lr=cfg.lr_generator, betas=(cfg.beta1, cfg.beta2)
        )
        head_params = [
            p for d in self.pipeline.discriminators.values() for p in d.head.parameters()
        ]
        self.d_opt = torch.optim.Adam(
            [
                {"params": head_params, "lr": cfg.lr_heads},
                {"params": [], "lr": cfg.lr_extractor},
            ],
            betas=(cfg.beta1, cfg.beta2),
        )
        self._sync_thaw()

    # -- thaw plumbing -------------------------------------------------

    def _roles(self) -> list[str]:
        return sorted(self.pipeline.discriminators)

    def _sync_thaw(self) -> None:
        """Propagate the freeze state into requires_grad flags and the optimizer."""
        count = self.freeze_state.unfrozen_count
        for role in self._roles():
            apply_freeze(self.pipeline.discriminators[role].extractor, count)
        group = self.d_opt.param_groups[1]
        group["params"] = [
            p
            for unit in self.units[:count]
            for role in self._roles()
            for p in unit_parameters(self.pipeline.discriminators[role].extractor, unit)
        ]

    # -- checkpoint plumbing --------------------------------------------

    def _modules(self) -> dict:
        modules = {}
        for role, module in self.pipeline.generators.items():
            modules[role] = module
        for role, module in self.pipeline.discriminators.items():
            if role in modules:
                raise ValueError(f"role {role!r} used by both a generator and a discriminator")
            modules[role] = module
        return modules

    def _optim_param_names(self, tag: str) -> dict[int, str]:
        """id(param) -> '<role>.<param_name>' for one optimizer's population."""
        source = self.pipeline.generators if tag == "g" else self.pipeline.discriminators
        names = {}
        for role, module in source.items():
            for name, param in module.named_parameters():
                names[id(param)] = f"{role}.{name}"
        return names

    # -- the loop --------------------------------------------------------

    def _check_finite(self, parts: dict) -> None:
        for name, value in parts.items():
            if not math.isfinite(value):
                raise NumericAbortError(name, value, self.epoch, self.global_step)

    def _log(self, writer, epoch: int, parts: dict) -> None:
        if self.global_step % self.cfg.log_every:
            return
        for name, value in sorted(parts.items()):
            row = (self.global_step, epoch, name, value)
            self.loss_rows.append(row)
            if writer is not None:
                writer.writerow(row)

    def train_step(self, batch, writer=None) -> dict:
        d_total, d_parts = self.pipeline.discriminator_step_loss(batch)
        self._check_finite(d_parts)
        self.d_opt.zero_grad(set_to_none=True)
        d_total.backward()
        self.d_opt.step()

        g_total, g_parts = self.pipeline.generator_step_loss(batch)
        self._check_finite(g_parts)
        self.g_opt.zero_grad(set_to_none=True)
        g_total.backward()
        self.g_opt.step()

        parts = dict(d_parts)
        parts.update(g_parts)
        self._log(writer, self.epoch, parts)
        self.global_step += 1
        return parts

    def run_epoch(self, writer=None) -> dict:
        """One schedule draw plus one pass of steps_per_epoch batches."""
        newly = step_epoch(
            self.policy, self.freeze_state, self.policy_rng, self.epoch, self.units
        )
        if newly:
            self._sync_thaw()
            if self.verbose:
                names = ", ".join(u.name for u in newly)
                print(f"epoch {self.epoch}: thawed {names} "
                      f"({self.freeze_state.unfrozen_count}/{len(self.units)})")
        sums: dict[str, float] = {}
        steps = 0
        for batch in self.pipeline.epoch_batches(self.sampler_rng):
            parts = self.train_step(batch, writer)
            for name, value in parts.items():
                sums[name] = sums.get(name, 0.0) + value
            steps += 1
        means = {name: value / max(steps, 1) for name, value in sums.items()}
        if self.verbose:
            shown = ", ".join(f"{k}={v:.4f}" for k, v in sorted(means.items()))
            print(f"epoch {self.epoch}: {shown}")
        self.epoch += 1
        return means

    def fit(self) -> dict:
        out_dir = Path(self.cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.txt").write_text(self.cfg.to_text())
        ckpt_dir = out_dir / "checkpoints"

        initial_metrics = self.pipeline.evaluate()
        epoch_means = []
        csv_path = out_dir / "losses.csv"
        mode = "a" if self.epoch > 0 and csv_path.exists() else "w"
        with open(csv_path, mode, newline="") as fh:
            writer = csv.writer(fh)
            if mode == "w":
                writer.writerow(("step", "epoch", "name", "value"))
            try:
                while self.epoch < self.cfg.epochs:
                    epoch_means.append(self.run_epoch(writer))
                    done = self.epoch
                    if self.cfg.checkpoint_every and done % self.cfg.checkpoint_every == 0:
                        save_checkpoint(self, ckpt_dir / f"epoch_{done:04d}.ckpt")
            except NumericAbortError as abort:
                (out_dir / "abort.json").write_text(json.dumps(abort.to_dict(), indent=2))
                raise

        final_metrics = self.pipeline.evaluate()
        save_checkpoint(self, ckpt_dir / "final.ckpt")
        (out_dir / "unfreeze_log.json").write_text(
            json.dumps(
                {
                    "mode": self.cfg.mode,
                    "threshold": self.cfg.unfreeze_threshold,
                    "total_units": len(self.units),
                    "unfrozen_count": self.freeze_state.unfrozen_count,
                    "history": self.freeze_state.history,
                },
                indent=2,
            )
        )
        report = {
            "variant": self.cfg.variant_label(),
            "task": self.cfg.task,
            "epochs": self.epoch,
            "steps": self.global_step,
            "initial_metrics": initial_metrics,
            "final_metrics": final_metrics,
            "unfrozen_count": self.freeze_state.unfrozen_count,
            "out_dir": str(out_dir),
        }
        (out_dir / "metrics.json").write_text(json.dumps(report, indent=2))
        return report


def save_checkpoint(trainer: Trainer, path) -> None:
    """Serialize models, optimizer moments, RNG streams, and progress."""
    tensors: dict[str, np.ndarray] = {}
    for role, module in trainer._modules().items():
        for name, value in module.state_dict().items():
            tensors[f"model.{role}.{name}"] = value.detach().cpu().numpy().copy()

    optim_steps: dict[str, dict] = {}
    for tag, opt in (("d", trainer.d_opt), ("g", trainer.g_opt)):
        names = trainer._optim_param_names(tag)
        optim_steps[tag] = {}
        for param, state in opt.state.items():
            full = names[id(param)]
            step = state["step"]
            optim_steps[tag][full] = float(step.item() if torch.is_tensor(step) else step)
            tensors[f"optim.{tag}.{full}.exp_avg"] = state["exp_avg"].detach().numpy().copy()
            tensors[f"optim.{tag}.{full}.exp_avg_sq"] = (
                state["exp_avg_sq"].detach().numpy().copy()
            )

    tensors["rng.torch"] = torch.get_rng_state().numpy().copy()
    metadata = {
        "kind": "checkpoint",
        "version": __version__,
        "task": trainer.cfg.task,
        "epoch": trainer.epoch,
        "step": trainer.global_step,
        "config": trainer.cfg.to_dict(),
        "freeze_state": trainer.freeze_state.to_dict(),
        "policy_rng": trainer.policy_rng.bit_generator.state,
        "sampler_rng": trainer.sampler_rng.bit_generator.state,
        "optim_steps": optim_steps,
    }
    manifest = WeightManifest(
        tensors=tensors, unit_order=[u.name for u in trainer.units], metadata=metadata
    )
    save_manifest(manifest, path)


def restore_trainer(path, verbose: bool = False) -> Trainer:
    """Rebuild a trainer that continues the checkpointed run exactly."""
    manifest = load_manifest(path)
    meta = manifest.metadata
    if meta.get("kind") != "checkpoint":
        raise ValueError(f"{path} is not a training checkpoint")
    cfg = from_dict(meta["config"])
    trainer = Trainer(cfg, verbose=verbose)

    for role, module in trainer._modules().items():
        prefix = f"model.{role}."
        state = {
            key[len(prefix):]: torch.as_tensor(arr.copy())
            for key, arr in manifest.tensors.items()
            if key.startswith(prefix)
        }
        module.load_state_dict(state, strict=True)

    trainer.freeze_state = FreezeState.from_dict(meta["freeze_state"])
    trainer._sync_thaw()

    for tag, opt in (("d", trainer.d_opt), ("g", trainer.g_opt)):
        names = trainer._optim_param_names(tag)
        by_name = {}
        source = trainer.pipeline.generators if tag == "g" else trainer.pipeline.discriminators
        for role, module in source.items():
            for name, param in module.named_parameters():
                by_name[f"{role}.{name}"] = param
        for full, step in meta["optim_steps"][tag].items():
            param = by_name[full]
            opt.state[param] = {
                "step": torch.tensor(float(step)),
                "exp_avg": torch.as_tensor(
                    manifest.tensors[f"optim.{tag}.{full}.exp_avg"].copy()
                ),
                "exp_avg_sq": torch.as_tensor(
                    manifest.tensors[f"optim.{tag}.{full}.exp_avg_sq"].copy()
                ),
            }

    trainer.policy_rng.bit_generator.state = meta["policy_rng"]
    trainer.sampler_rng.bit_generator.state = meta["sampler_rng"]
    torch.set_rng_state(torch.from_numpy(manifest.tensors["rng.torch"].copy()))
    trainer.epoch = int(meta["epoch"])
    trainer.global_step = int(meta["step"])
    return trainer


def train_once(cfg: ExperimentConfig, verbose: bool = False) -> dict:
    """Build a pipeline, run the full schedule, and return the run report."""
    return Trainer(cfg, verbose=verbose).fit()
