"""Epoch-level thaw schedule for the discriminator's feature extractor.

In progressive mode the schedule draws one uniform sample per epoch and thaws
the next unit when the draw exceeds the threshold, so each epoch opens at most
one unit and the expected wait per unit is 1 / (1 - threshold) epochs. The
frozen mode never thaws; the normal mode thaws everything up front, which
turns the discriminator into an ordinarily trained network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extractor import FreezeState, UnfreezeUnit

MODES = ("progressive", "frozen", "normal")


@dataclass(frozen=True)
class UnfreezePolicy:
    mode: str = "progressive"
    threshold: float = 0.66

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown unfreeze mode {self.mode!r}; expected one of {MODES}")
        if not 0.0 <= self.threshold < 1.0:
            raise ValueError(f"threshold must lie in [0, 1), got {self.threshold}")


def step_epoch(
    policy: UnfreezePolicy,
    state: FreezeState,
    rng: np.random.Generator,
    epoch: int,
    units: list[UnfreezeUnit],
) -> list[UnfreezeUnit]:
    """Advance the schedule by one epoch; returns the units thawed this epoch.

    The progressive draw happens every epoch, saturated or not, so the policy
    stream stays aligned across runs that only differ in unit count.
    """
    total = len(units)
    if state.unfrozen_count > total:
        raise ValueError(f"state counts {state.unfrozen_count} units, only {total} exist")
    if policy.mode == "frozen":
        return []
    if policy.mode == "normal":
        if state.unfrozen_count < total:
            new = list(units[state.unfrozen_count :])
            state.unfrozen_count = total
            state.record(epoch, [u.name for u in new])
            return new
        return []
    p = float(rng.random())
    if p > policy.threshold and state.unfrozen_count < total:
        unit = units[state.unfrozen_count]
        state.unfrozen_count += 1
        state.record(epoch, [unit.name])
        return [unit]
    return []


def expected_epochs_to_thaw(total_units: int, threshold: float) -> float:
    """Mean epochs until saturation: a geometric wait of 1/(1-threshold) per unit."""
    if not 0.0 <= threshold < 1.0:
        raise ValueError(f"threshold must lie in [0, 1), got {threshold}")
    return total_units / (1.0 - threshold)
