"""Task pipelines: model wiring, batch flow, and per-step losses.

Each pipeline owns its generators, discriminators, and datasets and exposes
the same surface to the trainer: ``epoch_batches`` yields tensor batches for
one epoch, ``discriminator_step_loss`` / ``generator_step_loss`` build the
two optimization objectives, and ``evaluate`` measures held-out quality.

Without a ``data_root`` the pipelines run on procedural textures: value-noise
images for super-resolution, checkerboards mapped through a fixed color
transform for paired translation, and stripes versus checkerboards for the
unpaired pair of domains. With a ``data_root`` images are read from
``<root>/<split>/<domain>`` (domains: ``hr``; ``source``/``target``;
``a``/``b``).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .config import ExperimentConfig
from .data import (
    DataError,
    ImageFolderDataset,
    ProceduralTextures,
    array_to_tensor,
    bicubic_upscale,
    degrade,
    derive_seeds,
    epoch_index_batches,
    save_image,
    stack_batch,
    tensor_to_array,
)
from .discriminator import build_discriminator
from .generators import ResidualTranslator, SuperResolutionGenerator, UNetTranslator
from .losses import (
    LossWeights,
    cycle_consistency_loss,
    discriminator_loss,
    generator_adversarial_loss,
    pixel_loss,
)
from .metrics import evaluate_pairs


def _make_dataset(cfg: ExperimentConfig, split: str, domain: str, kind: str, seed: int, count: int):
    if cfg.data_root:
        ds = ImageFolderDataset(Path(cfg.data_root) / split / domain)
        first = ds[0]
        if first.shape[0] != cfg.image_size or first.shape[1] != cfg.image_size:
            raise DataError(
                f"{split}/{domain} images are {first.shape[1]}x{first.shape[0]}, "
                f"config says image_size = {cfg.image_size}"
            )
        return ds
    return ProceduralTextures(kind, cfg.image_size, count, seed)


def _resolved_loss_weights(cfg: ExperimentConfig) -> LossWeights:
    w = cfg.resolved_weights()
    return LossWeights(
        adversarial=w["adv_weight"], pixel=w["pixel_weight"], cycle=w["cycle_weight"]
    )


def paired_target(source: np.ndarray) -> np.ndarray:
    """Fixed pointwise map defining the synthetic paired task."""
    return 1.0 - np.roll(source, -1, axis=2)


class SuperResolutionPipeline:
    """4x (configurable) super-resolution with an unconditional score head."""

    task = "sisr"

    def __init__(self, cfg: ExperimentConfig, seeds: dict):
        self.cfg = cfg
        self.weights = _resolved_loss_weights(cfg)
        self.train_set = _make_dataset(cfg, "train", "hr", "noise", seeds["train_a"], cfg.train_count)
        self.eval_set = _make_dataset(cfg, "eval", "hr", "noise", seeds["eval_a"], cfg.eval_count)
        self.generators = {"g": SuperResolutionGenerator(factor=cfg.scale_factor)}
        self.discriminators = {
            "d": build_discriminator(
                "sr", cfg.backbone, cfg.weights_path or None, spectral=cfg.spectral_norm
            )
        }

    def epoch_batches(self, rng: np.random.Generator):
        batches = epoch_index_batches(
            rng, len(self.train_set), self.cfg.batch_size, self.cfg.steps_per_epoch
        )
        factor = self.cfg.scale_factor
        for idx in batches:
            hr = [self.train_set[i] for i in idx]
            lr = [degrade(a, factor) for a in hr]
            yield {"lr": stack_batch(lr), "hr": stack_batch(hr)}

    def discriminator_step_loss(self, batch):
        with torch.no_grad():
            fake = self.generators["g"](batch["lr"])
        d = self.discriminators["d"]
        loss = discriminator_loss(d(batch["hr"]), d(fake))
        return loss, {"d": float(loss.detach())}

    def generator_step_loss(self, batch):
        sr = self.generators["g"](batch["lr"])
        adv = generator_adversarial_loss(self.discriminators["d"](sr))
        pix = pixel_loss(sr, batch["hr"])
        total = self.weights.adversarial * adv + self.weights.pixel * pix
        return total, {
            "g_adv": float(adv.detach()),
            "g_pixel": float(pix.detach()),
            "g_total": float(total.detach()),
        }

    def evaluate(self) -> dict:
        g = self.generators["g"]
        g.eval()
        factor = self.cfg.scale_factor
        model_pairs, baseline_pairs = [], []
        with torch.no_grad():
            for i in range(len(self.eval_set)):
                hr = self.eval_set[i]
                lr = degrade(hr, factor)
                sr = tensor_to_array(g(array_to_tensor(lr)[None])[0])
                model_pairs.append((hr, sr))
                baseline_pairs.append((hr, np.clip(bicubic_upscale(lr, factor), 0.0, 1.0)))
        g.train()
        model = evaluate_pairs(model_pairs)
        base = evaluate_pairs(baseline_pairs)
        return {
            "psnr": model.psnr,
            "ssim": model.ssim,
            "baseline_psnr": base.psnr,
            "baseline_ssim": base.ssim,
            "count": model.count,
        }

    def write_samples(self, out_dir, limit: int = 4) -> None:
        g = self.generators["g"]
        g.eval()
        out_dir = Path(out_dir)
        with torch.no_grad():
            for i in range(min(limit, len(self.eval_set))):
                hr = self.eval_set[i]
                lr = degrade(hr, self.cfg.scale_factor)
                sr = tensor_to_array(g(array_to_tensor(lr)[None])[0])
                save_image(lr, out_dir / f"{i:03d}_input.png")
                save_image(sr, out_dir / f"{i:03d}_output.png")
                save_image(hr, out_dir / f"{i:03d}_reference.png")
        g.train()


class PairedTranslationPipeline:
    """Aligned image-to-image translation with a condition-aware patch head."""

    task = "paired"

    def __init__(self, cfg: ExperimentConfig, seeds: dict):
        self.cfg = cfg
        self.weights = _resolved_loss_weights(cfg)
        self.train_src = _make_dataset(cfg, "train", "source", "checker", seeds["train_a"], cfg.train_count)
        self.eval_src = _make_dataset(cfg, "eval", "source", "checker", seeds["eval_a"], cfg.eval_count)
        if cfg.data_root:
            self.train_tgt = _make_dataset(cfg, "train", "target", "checker", 0, cfg.train_count)
            self.eval_tgt = _make_dataset(cfg, "eval", "target", "checker", 0, cfg.eval_count)
            if len(self.train_tgt) != len(self.train_src) or len(self.eval_tgt) != len(self.eval_src):
                raise DataError("paired source/target folders differ in image count")
        else:
            self.train_tgt = None
            self.eval_tgt = None
        self.generators = {"g": UNetTranslator()}
        self.discriminators = {
            "d": build_discriminator(
                "translation",
                cfg.backbone,
                cfg.weights_path or None,
                spectral=cfg.spectral_norm,
                paired=True,
            )
        }

    def _pair(self, src_set, tgt_set, index: int):
        src = src_set[index]
        tgt = tgt_set[index] if tgt_set is not None else paired_target(src)
        return src, tgt

    def epoch_batches(self, rng: np.random.Generator):
        batches = epoch_index_batches(
            rng, len(self.train_src), self.cfg.batch_size, self.cfg.steps_per_epoch
        )
        for idx in batches:
            pairs = [self._pair(self.train_src, self.train_tgt, i) for i in idx]
            yield {
                "source": stack_batch([p[0] for p in pairs]),
                "target": stack_batch([p[1] for p in pairs]),
            }

    def discriminator_step_loss(self, batch):
        with torch.no_grad():
            fake = self.generators["g"](batch["source"])
        d = self.discriminators["d"]
        loss = discriminator_loss(
            d(batch["target"], condition=batch["source"]),
            d(fake, condition=batch["source"]),
        )
        return loss, {"d": float(loss.detach())}

    def generator_step_loss(self, batch):
        fake = self.generators["g"](batch["source"])
        adv = generator_adversarial_loss(
            self.discriminators["d"](fake, condition=batch["source"])
        )
        pix = pixel_loss(fake, batch["target"])
        total = self.weights.adversarial * adv + self.weights.pixel * pix
        return total, {
            "g_adv": float(adv.detach()),
            "g_pixel": float(pix.detach()),
            "g_total": float(total.detach()),
        }

    def evaluate(self) -> dict:
        g = self.generators["g"]
        g.eval()
        pairs = []
        with torch.no_grad():
            for i in range(len(self.eval_src)):
                src, tgt = self._pair(self.eval_src, self.eval_tgt, i)
                out = tensor_to_array(g(array_to_tensor(src)[None])[0])
                pairs.append((tgt, out))
        g.train()
        report = evaluate_pairs(pairs)
        return {"psnr": report.psnr, "ssim": report.ssim, "count": report.count}

    def write_samples(self, out_dir, limit: int = 4) -> None:
        g = self.generators["g"]
        g.eval()
        out_dir = Path(out_dir)
        with torch.no_grad():
            for i in range(min(limit, len(self.eval_src))):
                src, tgt = self._pair(self.eval_src, self.eval_tgt, i)
                out = tensor_to_array(g(array_to_tensor(src)[None])[0])
                save_image(src, out_dir / f"{i:03d}_source.png")
                save_image(out, out_dir / f"{i:03d}_output.png")
                save_image(tgt, out_dir / f"{i:03d}_reference.png")
        g.train()


class UnpairedTranslationPipeline:
    """Two-domain cycle-consistent translation with one discriminator per domain.

    Both discriminators follow the same thaw schedule; the trainer applies one
    shared freeze state to every extractor the pipeline reports.
    """

    task = "unpaired"

    def __init__(self, cfg: ExperimentConfig, seeds: dict):
        self.cfg = cfg
        self.weights = _resolved_loss_weights(cfg)
        self.train_a = _make_dataset(cfg, "train", "a", "stripes", seeds["train_a"], cfg.train_count)
        self.train_b = _make_dataset(cfg, "train", "b", "checker", seeds["train_b"], cfg.train_count)
        self.eval_a = _make_dataset(cfg, "eval", "a", "stripes", seeds["eval_a"], cfg.eval_count)
        self.eval_b = _make_dataset(cfg, "eval", "b", "checker", seeds["eval_b"], cfg.eval_count)
        self.generators = {"g_ab": ResidualTranslator(), "g_ba": ResidualTranslator()}
        weights_path = cfg.weights_path or None
        self.discriminators = {
            "d_a": build_discriminator(
                "translation", cfg.backbone, weights_path, spectral=cfg.spectral_norm
            ),
            "d_b": build_discriminator(
                "translation", cfg.backbone, weights_path, spectral=cfg.spectral_norm
            ),
        }

    def epoch_batches(self, rng: np.random.Generator):
        a_batches = epoch_index_batches(
            rng, len(self.train_a), self.cfg.batch_size, self.cfg.steps_per_epoch
        )
        b_batches = epoch_index_batches(
            rng, len(self.train_b), self.cfg.batch_size, self.cfg.steps_per_epoch
        )
        for ia, ib in zip(a_batches, b_batches):
            yield {
                "a": stack_batch([self.train_a[i] for i in ia]),
                "b": stack_batch([self.train_b[i] for i in ib]),
            }

    def discriminator_step_loss(self, batch):
        with torch.no_grad():
            fake_b = self.generators["g_ab"](batch["a"])
            fake_a = self.generators["g_ba"](batch["b"])
        d_a = self.discriminators["d_a"]
        d_b = self.discriminators["d_b"]
        loss_a = discriminator_loss(d_a(batch["a"]), d_a(fake_a))
        loss_b = discriminator_loss(d_b(batch["b"]), d_b(fake_b))
        return loss_a + loss_b, {
            "d_a": float(loss_a.detach()),
            "d_b": float(loss_b.detach()),
            "d": float((loss_a + loss_b).detach()),
        }

    def generator_step_loss(self, batch):
        fake_b = self.generators["g_ab"](batch["a"])
        fake_a = self.generators["g_ba"](batch["b"])
        adv = generator_adversarial_loss(
            self.discriminators["d_b"](fake_b)
        ) + generator_adversarial_loss(self.discriminators["d_a"](fake_a))
        cycle = cycle_consistency_loss(
            self.generators["g_ba"](fake_b), batch["a"]
        ) + cycle_consistency_loss(self.generators["g_ab"](fake_a), batch["b"])
        total = self.weights.adversarial * adv + self.weights.cycle * cycle
        return total, {
            "g_adv": float(adv.detach()),
            "g_cycle": float(cycle.detach()),
            "g_total": float(total.detach()),
        }

    def evaluate(self) -> dict:
        g_ab = self.generators["g_ab"]
        g_ba = self.generators["g_ba"]
        g_ab.eval()
        g_ba.eval()
        cycles = []
        with torch.no_grad():
            for i in range(len(self.eval_a)):
                a = array_to_tensor(self.eval_a[i])[None]
                cycles.append(float(cycle_consistency_loss(g_ba(g_ab(a)), a)))
            for i in range(len(self.eval_b)):
                b = array_to_tensor(self.eval_b[i])[None]
                cycles.append(float(cycle_consistency_loss(g_ab(g_ba(b)), b)))
        g_ab.train()
        g_ba.train()
        return {"cycle_l1": float(np.mean(cycles)), "count": len(cycles)}

    def write_samples(self, out_dir, limit: int = 4) -> None:
        g_ab = self.generators["g_ab"]
        g_ba = self.generators["g_ba"]
        g_ab.eval()
        g_ba.eval()
        out_dir = Path(out_dir)
        with torch.no_grad():
            for i in range(min(limit, len(self.eval_a))):
                a = array_to_tensor(self.eval_a[i])[None]
                fake_b = g_ab(a)
                save_image(self.eval_a[i], out_dir / f"{i:03d}_a.png")
                save_image(tensor_to_array(fake_b[0]), out_dir / f"{i:03d}_a_to_b.png")
                save_image(tensor_to_array(g_ba(fake_b)[0]), out_dir / f"{i:03d}_a_cycled.png")
        g_ab.train()
        g_ba.train()


PIPELINES = {
    "sisr": SuperResolutionPipeline,
    "paired": PairedTranslationPipeline,
    "unpaired": UnpairedTranslationPipeline,
}


def build_pipeline(cfg: ExperimentConfig):
    """Validate the config, seed weight init, and construct the task pipeline."""
    cfg.validate()
    seeds = derive_seeds(cfg.seed)
    torch.manual_seed(seeds["torch"])
    return PIPELINES[cfg.task](cfg, seeds)
