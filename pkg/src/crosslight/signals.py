"""Signal head state machine: minimum green, fixed yellow, feasible actions.

A phase switch always runs through a 3.0 s yellow shown to the movements that
lose right-of-way; movements shared by the outgoing and incoming phase keep
their green. While the yellow runs the transition is committed: the only
feasible action is the pending phase. A green younger than 10 s can only be
extended.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .topology import IntersectionTopology

MIN_GREEN = 10.0
YELLOW = 3.0


class SignalError(ValueError):
    pass


@dataclass
class SignalState:
    current_phase: int = 1
    green_elapsed: float = 0.0
    yellow_remaining: float = 0.0
    pending_phase: int | None = None
    clock: float = 0.0
    green_start: float = 0.0
    history: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def in_yellow(self) -> bool:
        return self.yellow_remaining > 0.0

    def green_movements(self, topology: IntersectionTopology) -> frozenset[int]:
        current = set(topology.phase(self.current_phase).movements)
        if self.in_yellow:
            pending = set(topology.phase(self.pending_phase).movements)
            return frozenset(current & pending)
        return frozenset(current)


def feasible_actions(signal: SignalState, topology: IntersectionTopology) -> frozenset[int]:
    if signal.in_yellow:
        return frozenset({signal.pending_phase})
    if signal.green_elapsed < MIN_GREEN:
        return frozenset({signal.current_phase})
    return frozenset(p.id for p in topology.phases)


def apply_action(signal: SignalState, action: int,
                 topology: IntersectionTopology) -> SignalState:
    """Commit the chosen phase. Extending the current green is a no-op;
    switching closes the green interval and starts the yellow."""
    allowed = feasible_actions(signal, topology)
    if action not in allowed:
        if not signal.in_yellow and signal.green_elapsed < MIN_GREEN:
            raise SignalError(
                f"min-green violation: phase {action} requested after "
                f"{signal.green_elapsed:.1f} s of green")
        raise SignalError(f"infeasible action {action}, allowed {sorted(allowed)}")
    if action == signal.current_phase or signal.in_yellow:
        return signal
    signal.history.append((signal.current_phase, signal.green_start, signal.clock))
    signal.pending_phase = action
    signal.yellow_remaining = YELLOW
    return signal


def tick_signal(signal: SignalState, dt: float) -> SignalState:
    if dt <= 0:
        raise SignalError("dt must be > 0")
    signal.clock += dt
    if signal.in_yellow:
        signal.yellow_remaining -= dt
        if signal.yellow_remaining <= 1e-12:
            leftover = -signal.yellow_remaining
            signal.yellow_remaining = 0.0
            signal.current_phase = signal.pending_phase
            signal.pending_phase = None
            signal.green_elapsed = leftover
            signal.green_start = signal.clock - leftover
    else:
        signal.green_elapsed += dt
    return signal


def close_history(signal: SignalState) -> list[tuple[int, float, float]]:
    """History including the still-open green, for end-of-episode export."""
    out = list(signal.history)
    if not signal.in_yellow:
        out.append((signal.current_phase, signal.green_start, signal.clock))
    return out
