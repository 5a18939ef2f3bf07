import json

import numpy as np
import pytest
import torch

from thawgan.config import ExperimentConfig
from thawgan.manifest import WeightManifest, save_manifest
from thawgan.trainer import (
    NumericAbortError,
    Trainer,
    restore_trainer,
    save_checkpoint,
    train_once,
)


def _cfg(tmp_path, **kwargs) -> ExperimentConfig:
    base = dict(
        task="sisr",
        image_size=32,
        epochs=2,
        steps_per_epoch=3,
        batch_size=1,
        train_count=4,
        eval_count=2,
        seed=5,
        out_dir=str(tmp_path / "run"),
    )
    base.update(kwargs)
    return ExperimentConfig(**base)


def test_optimizer_groups_use_configured_rates(tmp_path):
    cfg = _cfg(tmp_path, lr_heads=3e-4, lr_extractor=2e-6, lr_generator=1e-4)
    trainer = Trainer(cfg)
    assert trainer.d_opt.param_groups[0]["lr"] == pytest.approx(3e-4)
    assert trainer.d_opt.param_groups[1]["lr"] == pytest.approx(2e-6)
    assert trainer.g_opt.param_groups[0]["lr"] == pytest.approx(1e-4)
    assert trainer.d_opt.param_groups[0]["betas"] == (cfg.beta1, cfg.beta2)
    # nothing thawed yet: the extractor group starts empty
    assert trainer.d_opt.param_groups[1]["params"] == []


def test_fit_writes_run_artifacts(tmp_path):
    cfg = _cfg(tmp_path)
    report = train_once(cfg)
    out = tmp_path / "run"
    for name in ("config.txt", "losses.csv", "metrics.json", "unfreeze_log.json"):
        assert (out / name).exists(), name
    assert (out / "checkpoints" / "final.ckpt").exists()
    assert report["epochs"] == 2
    assert report["steps"] == 6
    assert report["task"] == "sisr"
    assert set(report["initial_metrics"]) == set(report["final_metrics"])
    lines = (out / "losses.csv").read_text().strip().splitlines()
    assert lines[0] == "step,epoch,name,value"
    # 6 steps x 4 logged parts (d, g_adv, g_pixel, g_total)
    assert len(lines) == 1 + 6 * 4
    log = json.loads((out / "unfreeze_log.json").read_text())
    assert log["total_units"] == 13
    assert log["unfrozen_count"] == sum(len(e["units"]) for e in log["history"])


def test_log_every_thins_the_loss_log(tmp_path):
    cfg = _cfg(tmp_path, log_every=2)
    trainer = Trainer(cfg)
    trainer.run_epoch()
    steps = {row[0] for row in trainer.loss_rows}
    assert steps == {0, 2}


def test_frozen_mode_never_thaws(tmp_path):
    cfg = _cfg(tmp_path, mode="frozen", epochs=3)
    trainer = Trainer(cfg)
    for _ in range(3):
        trainer.run_epoch()
    assert trainer.freeze_state.unfrozen_count == 0
    assert trainer.d_opt.param_groups[1]["params"] == []
    assert all(
        not p.requires_grad
        for p in trainer.pipeline.discriminators["d"].extractor.parameters()
    )


def test_normal_mode_thaws_everything_up_front(tmp_path):
    cfg = _cfg(tmp_path, mode="normal")
    trainer = Trainer(cfg)
    trainer.run_epoch()
    assert trainer.freeze_state.unfrozen_count == 13
    assert len(trainer.freeze_state.history) == 1
    event = trainer.freeze_state.history[0]
    assert event["epoch"] == 0
    assert len(event["units"]) == 13
    extractor = trainer.pipeline.discriminators["d"].extractor
    assert all(p.requires_grad for p in extractor.parameters())
    group = trainer.d_opt.param_groups[1]["params"]
    assert len(group) == len(list(extractor.parameters()))


def test_progressive_threshold_zero_thaws_one_per_epoch(tmp_path):
    cfg = _cfg(tmp_path, unfreeze_threshold=0.0, epochs=5)
    trainer = Trainer(cfg)
    counts = []
    for _ in range(5):
        trainer.run_epoch()
        counts.append(trainer.freeze_state.unfrozen_count)
    assert counts == [1, 2, 3, 4, 5]


def test_unpaired_thaw_spans_both_extractors(tmp_path):
    cfg = _cfg(
        tmp_path, task="unpaired", image_size=68, mode="normal", steps_per_epoch=1
    )
    trainer = Trainer(cfg)
    trainer.run_epoch()
    group = trainer.d_opt.param_groups[1]["params"]
    per_extractor = len(
        list(trainer.pipeline.discriminators["d_a"].extractor.parameters())
    )
    assert len(group) == 2 * per_extractor


def test_identical_seeds_give_identical_loss_rows(tmp_path):
    rows = []
    for name in ("a", "b"):
        trainer = Trainer(_cfg(tmp_path / name))
        trainer.run_epoch()
        trainer.run_epoch()
        rows.append(trainer.loss_rows)
    assert rows[0] == rows[1]


def test_numeric_abort_carries_context_and_writes_report(tmp_path):
    cfg = _cfg(tmp_path)
    trainer = Trainer(cfg)

    original = trainer.pipeline.generator_step_loss

    def poisoned(batch):
        total, parts = original(batch)
        parts["g_total"] = float("nan")
        return total, parts

    trainer.pipeline.generator_step_loss = poisoned
    with pytest.raises(NumericAbortError) as info:
        trainer.fit()
    assert info.value.name == "g_total"
    assert info.value.step == 0
    report = json.loads((tmp_path / "run" / "abort.json").read_text())
    assert report["name"] == "g_total"


def test_checkpoint_roundtrip_restores_progress(tmp_path):
    cfg = _cfg(tmp_path, mode="normal")
    trainer = Trainer(cfg)
    trainer.run_epoch()
    path = tmp_path / "mid.ckpt"
    save_checkpoint(trainer, path)

    restored = restore_trainer(path)
    assert restored.epoch == trainer.epoch
    assert restored.global_step == trainer.global_step
    assert restored.cfg == trainer.cfg
    assert restored.freeze_state.unfrozen_count == trainer.freeze_state.unfrozen_count
    for role, module in trainer._modules().items():
        other = restored._modules()[role]
        for (name, a), (_, b) in zip(module.state_dict().items(), other.state_dict().items()):
            assert torch.equal(a, b), f"{role}.{name}"


def test_resume_continues_bit_for_bit(tmp_path):
    contiguous = Trainer(_cfg(tmp_path / "contiguous"))
    contiguous.run_epoch()
    contiguous.run_epoch()

    split = Trainer(_cfg(tmp_path / "split"))
    split.run_epoch()
    path = tmp_path / "split.ckpt"
    save_checkpoint(split, path)
    resumed = restore_trainer(path)
    resumed.run_epoch()

    want = contiguous.loss_rows
    got = split.loss_rows + resumed.loss_rows
    assert got == want


def test_restore_rejects_non_checkpoint_manifests(tmp_path):
    path = tmp_path / "weights.manifest"
    save_manifest(
        WeightManifest(
            tensors={"stem_conv.weight": np.zeros((4, 3, 7, 7), dtype=np.float32)},
            unit_order=[],
            metadata={"kind": "weights"},
        ),
        path,
    )
    with pytest.raises(ValueError, match="not a training checkpoint"):
        restore_trainer(path)


def test_checkpoint_every_writes_periodic_snapshots(tmp_path):
    cfg = _cfg(tmp_path, epochs=3, checkpoint_every=2)
    train_once(cfg)
    ckpts = sorted(p.name for p in (tmp_path / "run" / "checkpoints").iterdir())
    assert ckpts == ["epoch_0002.ckpt", "final.ckpt"]
