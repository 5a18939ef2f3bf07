import numpy as np
import pytest

from thawgan.extractor import FreezeState, unfreeze_order
from thawgan.scheduler import UnfreezePolicy, expected_epochs_to_thaw, step_epoch

UNITS = unfreeze_order()


class ScriptedRng:
    """Stands in for a Generator; returns a scripted sequence of draws."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def test_policy_validation():
    with pytest.raises(ValueError):
        UnfreezePolicy(mode="sometimes")
    with pytest.raises(ValueError):
        UnfreezePolicy(threshold=1.0)
    with pytest.raises(ValueError):
        UnfreezePolicy(threshold=-0.1)
    UnfreezePolicy(threshold=0.0)  # always thaws; valid


def test_frozen_mode_never_thaws():
    policy = UnfreezePolicy(mode="frozen")
    state = FreezeState()
    rng = np.random.default_rng(0)
    for epoch in range(500):
        assert step_epoch(policy, state, rng, epoch, UNITS) == []
    assert state.unfrozen_count == 0
    assert state.history == []


def test_normal_mode_thaws_everything_up_front():
    policy = UnfreezePolicy(mode="normal")
    state = FreezeState()
    rng = np.random.default_rng(0)
    new = step_epoch(policy, state, rng, 0, UNITS)
    assert [u.name for u in new] == [u.name for u in UNITS]
    assert state.unfrozen_count == 13
    assert state.history == [{"epoch": 0, "units": [u.name for u in UNITS]}]
    assert step_epoch(policy, state, rng, 1, UNITS) == []


def test_threshold_is_strict():
    policy = UnfreezePolicy(threshold=0.66)
    state = FreezeState()
    rng = ScriptedRng([0.66, 0.6600000001, 0.2, 0.9])
    assert step_epoch(policy, state, rng, 0, UNITS) == []  # equal: no thaw
    assert len(step_epoch(policy, state, rng, 1, UNITS)) == 1  # just above
    assert step_epoch(policy, state, rng, 2, UNITS) == []
    assert len(step_epoch(policy, state, rng, 3, UNITS)) == 1
    assert state.unfrozen_count == 2
    assert [h["units"] for h in state.history] == [["dense6_conv3x3"], ["dense6_conv1x1"]]


def test_progressive_matches_independent_replay():
    policy = UnfreezePolicy(threshold=0.66)
    state = FreezeState()
    rng = np.random.default_rng(42)
    replay = np.random.default_rng(42)
    expected_count = 0
    for epoch in range(300):
        new = step_epoch(policy, state, rng, epoch, UNITS)
        draw = replay.random()
        should = draw > 0.66 and expected_count < len(UNITS)
        if should:
            assert [u.index for u in new] == [expected_count]
            expected_count += 1
        else:
            assert new == []
        assert state.unfrozen_count == expected_count


def test_draws_continue_after_saturation():
    # the policy stream advances every epoch even once everything is thawed
    policy = UnfreezePolicy(threshold=0.0)
    state = FreezeState()
    rng = np.random.default_rng(1)
    probe = np.random.default_rng(1)
    for epoch in range(20):
        step_epoch(policy, state, rng, epoch, UNITS)
        probe.random()
    assert state.unfrozen_count == 13
    assert rng.random() == probe.random()


def test_threshold_zero_saturates_in_exactly_unit_count_epochs():
    policy = UnfreezePolicy(threshold=0.0)
    state = FreezeState()
    rng = np.random.default_rng(3)
    epochs = 0
    while state.unfrozen_count < len(UNITS):
        step_epoch(policy, state, rng, epochs, UNITS)
        epochs += 1
    assert epochs == len(UNITS)


def test_one_unit_per_epoch_at_most():
    policy = UnfreezePolicy(threshold=0.1)
    state = FreezeState()
    rng = np.random.default_rng(7)
    for epoch in range(100):
        assert len(step_epoch(policy, state, rng, epoch, UNITS)) <= 1


def test_history_records_epochs():
    policy = UnfreezePolicy(threshold=0.0)
    state = FreezeState()
    rng = np.random.default_rng(5)
    for epoch in range(13):
        step_epoch(policy, state, rng, epoch, UNITS)
    assert [h["epoch"] for h in state.history] == list(range(13))


def test_overrun_state_rejected():
    policy = UnfreezePolicy()
    state = FreezeState(unfrozen_count=14)
    with pytest.raises(ValueError):
        step_epoch(policy, state, np.random.default_rng(0), 0, UNITS)


def test_expected_epochs_formula():
    assert expected_epochs_to_thaw(13, 0.66) == pytest.approx(13 / 0.34)
    with pytest.raises(ValueError):
        expected_epochs_to_thaw(13, 1.0)


def test_freeze_state_round_trip():
    state = FreezeState(unfrozen_count=3)
    state.record(4, ["dense6_conv3x3"])
    clone = FreezeState.from_dict(state.to_dict())
    assert clone.unfrozen_count == 3
    assert clone.history == state.history
