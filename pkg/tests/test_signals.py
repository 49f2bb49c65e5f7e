import numpy as np
import pytest

from crosslight.signals import (MIN_GREEN, YELLOW, SignalError, SignalState,
                                apply_action, close_history, feasible_actions,
                                tick_signal)

from helpers import topo, TWO_PHASE

T2 = topo(TWO_PHASE)


def test_min_green_restricts_to_current():
    sig = SignalState()
    tick_signal(sig, 4.0)
    assert feasible_actions(sig, T2) == {1}


def test_past_min_green_all_phases_feasible():
    sig = SignalState()
    tick_signal(sig, 12.0)
    assert feasible_actions(sig, T2) == {1, 2}


def test_mid_yellow_only_pending_feasible():
    sig = SignalState()
    tick_signal(sig, 12.0)
    apply_action(sig, 2, T2)
    tick_signal(sig, 1.0)
    assert sig.in_yellow
    assert feasible_actions(sig, T2) == {2}


def test_extension_is_a_noop():
    sig = SignalState()
    tick_signal(sig, 12.0)
    apply_action(sig, 1, T2)
    assert not sig.in_yellow
    assert sig.green_elapsed == pytest.approx(12.0)
    assert sig.history == []


def test_switch_time_is_exact():
    # switch requested at t=20 -> new green begins at t=23.0 exactly
    sig = SignalState()
    for _ in range(40):
        tick_signal(sig, 0.5)
    assert sig.clock == 20.0
    apply_action(sig, 2, T2)
    while sig.in_yellow:
        tick_signal(sig, 0.5)
    assert sig.clock == 23.0
    assert sig.current_phase == 2
    assert sig.green_elapsed == 0.0
    assert sig.green_start == 23.0


def test_min_green_violation_rejected():
    sig = SignalState()
    tick_signal(sig, 6.0)
    with pytest.raises(SignalError, match="min-green"):
        apply_action(sig, 2, T2)


def test_yellow_expiry_mid_tick_carries_leftover():
    sig = SignalState()
    tick_signal(sig, 12.0)
    apply_action(sig, 2, T2)
    tick_signal(sig, 2.8)
    assert sig.in_yellow
    tick_signal(sig, 0.5)  # crosses the 3.0 s boundary by 0.3
    assert not sig.in_yellow
    assert sig.green_elapsed == pytest.approx(0.3)


def test_green_set_during_yellow_keeps_shared_movements():
    shared = topo(TWO_PHASE, phases=[
        {"id": 1, "movements": [1]},
        {"id": 2, "movements": [1, 2]},
    ], conflicts=[])
    sig = SignalState()
    tick_signal(sig, 12.0)
    assert sig.green_movements(shared) == {1}
    apply_action(sig, 2, T2)
    tick_signal(sig, 0.5)
    assert sig.in_yellow
    assert sig.green_movements(shared) == {1}  # shared movement stays green
    assert sig.green_movements(T2) == frozenset()  # disjoint phases: all-yellow


def test_history_records_min_green_and_exact_yellows():
    sig = SignalState()
    rng = np.random.default_rng(0)
    for _ in range(500):
        tick_signal(sig, 0.5)
        allowed = feasible_actions(sig, T2)
        if rng.random() < 0.3:
            apply_action(sig, int(rng.choice(sorted(allowed))), T2)
    hist = close_history(sig)
    for phase, start, end in hist[:-1]:
        assert end - start >= MIN_GREEN - 1e-9
    for (_, _, end), (_, nxt_start, _) in zip(hist, hist[1:]):
        assert nxt_start - end == pytest.approx(YELLOW)


def test_invariants_over_random_ticks():
    rng = np.random.default_rng(7)
    sig = SignalState()
    for _ in range(10_000):
        dt = float(rng.uniform(0.05, 1.0))
        tick_signal(sig, dt)
        allowed = feasible_actions(sig, T2)
        assert len(allowed) >= 1
        assert 0.0 <= sig.yellow_remaining <= YELLOW
        assert (sig.pending_phase is not None) == (sig.yellow_remaining > 0.0)
        assert sig.green_elapsed >= 0.0
        if rng.random() < 0.2:
            apply_action(sig, int(rng.choice(sorted(allowed))), T2)


def test_tick_rejects_nonpositive_dt():
    with pytest.raises(SignalError):
        tick_signal(SignalState(), 0.0)
