"""Flat key=value experiment configuration.

Config files are plain text: one ``key = value`` per line, ``#`` comments.
Values round-trip through ``to_text``/``from_text``. Every key can also be
overridden from the environment (``THAWGAN_<KEY>=value``) and from
``--set key=value`` on the command line; precedence is defaults < file <
environment < command line.

Loss weights default to ``auto``, which resolves per task: super-resolution
leans on the pixel term (adversarial 1e-3, pixel 1), paired translation uses
pixel weight 100, unpaired translation uses cycle weight 10.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

TASKS = ("sisr", "paired", "unpaired")
MODE_ALIASES = {
    "uf": "progressive",
    "progressive": "progressive",
    "f": "frozen",
    "frozen": "frozen",
    "n": "normal",
    "normal": "normal",
}
ENV_PREFIX = "THAWGAN_"

# generator loss weights resolved when the config says "auto"
TASK_WEIGHTS = {
    "sisr": {"adv_weight": 1e-3, "pixel_weight": 1.0, "cycle_weight": 0.0},
    "paired": {"adv_weight": 1.0, "pixel_weight": 100.0, "cycle_weight": 0.0},
    "unpaired": {"adv_weight": 1.0, "pixel_weight": 0.0, "cycle_weight": 10.0},
}


class ConfigError(Exception):
    """Raised for unknown keys, bad values, or inconsistent settings."""


@dataclass
class ExperimentConfig:
    task: str = "sisr"
    mode: str = "progressive"
    spectral_norm: bool = True
    unfreeze_threshold: float = 0.66
    seed: int = 0

    epochs: int = 25
    steps_per_epoch: int = 20
    batch_size: int = 2
    image_size: int = 80
    scale_factor: int = 4
    train_count: int = 40
    eval_count: int = 8
    data_root: str = ""

    lr_extractor: float = 1e-6
    lr_heads: float = 2e-4
    lr_generator: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adv_weight: float | None = None
    pixel_weight: float | None = None
    cycle_weight: float | None = None

    backbone: str = "densenet121_block1"
    weights_path: str = ""
    power_iterations: int = 1

    out_dir: str = "runs/exp"
    checkpoint_every: int = 0
    log_every: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.mode not in ("progressive", "frozen", "normal"):
            raise ConfigError(f"mode must be progressive, frozen, or normal, got {self.mode!r}")
        if not 0.0 <= self.unfreeze_threshold < 1.0:
            raise ConfigError(
                f"unfreeze_threshold must lie in [0, 1), got {self.unfreeze_threshold}"
            )
        for name in ("epochs", "steps_per_epoch", "batch_size", "train_count", "eval_count",
                     "image_size", "scale_factor", "power_iterations"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        for name in ("lr_extractor", "lr_heads", "lr_generator"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        for name in ("adv_weight", "pixel_weight", "cycle_weight"):
            value = getattr(self, name)
            if value is not None and (value < 0 or math.isnan(value)):
                raise ConfigError(f"{name} must be nonnegative")
        if self.image_size % 4:
            raise ConfigError(f"image_size must divide by 4, got {self.image_size}")
        if self.task == "sisr":
            if self.image_size % self.scale_factor:
                raise ConfigError(
                    f"image_size {self.image_size} must divide by scale_factor {self.scale_factor}"
                )
            if self.image_size // self.scale_factor < 8:
                raise ConfigError("low-resolution inputs would be under 8 pixels")
        else:
            if self.image_size < 68:
                raise ConfigError(
                    f"translation tasks need image_size >= 68 (patch head minimum), "
                    f"got {self.image_size}"
                )
        if self.checkpoint_every < 0 or self.log_every < 1:
            raise ConfigError("checkpoint_every must be >= 0 and log_every >= 1")
        return self

    def resolved_weights(self) -> dict:
        base = dict(TASK_WEIGHTS[self.task])
        for name in base:
            value = getattr(self, name)
            if value is not None:
                base[name] = value
        return base

    def variant_label(self) -> str:
        label = "Dense_D"
        if self.spectral_norm:
            label += "+SN"
        if self.mode == "progressive":
            label += "+UF"
        elif self.mode == "frozen":
            label += "+F"
        return label

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        lines = []
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            lines.append(f"{field.name} = {'auto' if value is None else value}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_OPTIONAL_FLOATS = ("adv_weight", "pixel_weight", "cycle_weight")


def _parse_value(key: str, raw: str):
    field = _FIELDS[key]
    raw = raw.strip()
    if key in _OPTIONAL_FLOATS:
        if raw.lower() in ("auto", "none", ""):
            return None
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number or 'auto', got {raw!r}") from exc
    if key == "mode":
        mode = MODE_ALIASES.get(raw.lower())
        if mode is None:
            raise ConfigError(f"mode: expected UF/progressive, F/frozen, or N/normal, got {raw!r}")
        return mode
    if field.type == "bool":
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if field.type == "int":
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if field.type == "float":
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
    return raw


def apply_assignments(cfg: ExperimentConfig, pairs, origin: str) -> ExperimentConfig:
    """Apply ``key=value`` string pairs to a config copy."""
    updates = {}
    for key, raw in pairs:
        key = key.strip().lower()
        if key not in _FIELDS:
            raise ConfigError(f"{origin}: unknown config key {key!r}")
        updates[key] = _parse_value(key, raw)
    return dataclasses.replace(cfg, **updates)


def from_text(text: str, origin: str = "config") -> ExperimentConfig:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        pairs.append((key, raw))
    return apply_assignments(ExperimentConfig(), pairs, origin)


def from_file(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return from_text(text, origin=str(path))


def apply_env(cfg: ExperimentConfig, environ) -> ExperimentConfig:
    pairs = []
    for key, value in sorted(environ.items()):
        if key.startswith(ENV_PREFIX):
            pairs.append((key[len(ENV_PREFIX) :].lower(), value))
    return apply_assignments(cfg, pairs, origin="environment")


def from_dict(d: dict) -> ExperimentConfig:
    known = {k: v for k, v in d.items() if k in _FIELDS}
    return dataclasses.replace(ExperimentConfig(), **known)
