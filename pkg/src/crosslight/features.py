"""Observation encoding for the learned controller.

Each movement contributes a 7-component row: flow, max/mean occupancy since
the last control action, turn-kind indicator, lane count, current-green flag
and min-green-satisfied flag. Rows stack into a 12-row frame (zero rows pad
intersections with fewer movements) and the last five frames form the state
tensor, oldest first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import WorldState
from .signals import MIN_GREEN, SignalState

N_MOVEMENT_SLOTS = 12
N_FEATURES = 7
N_FRAMES = 5

TURN_CODE = {"straight": 0, "left": 1, "right": 2}


@dataclass(frozen=True)
class MovementFeature:
    flow: float
    occ_max: float
    occ_mean: float
    turn_code: int
    lane_count: int
    is_green: int
    min_green_done: int

    def as_array(self) -> np.ndarray:
        return np.array([self.flow, self.occ_max, self.occ_mean,
                         float(self.turn_code), float(self.lane_count),
                         float(self.is_green), float(self.min_green_done)],
                        dtype=np.float64)


def encode_movement(world: WorldState, movement_id: int, signal: SignalState,
                    since: float) -> MovementFeature:
    movement = world.topology.movement(movement_id)
    flow, occ_max, occ_mean = world.movement_stats(movement_id, since)
    green = movement_id in signal.green_movements(world.topology)
    min_green_done = bool(green and not signal.in_yellow
                          and signal.green_elapsed >= MIN_GREEN)
    return MovementFeature(
        flow=flow,
        occ_max=occ_max,
        occ_mean=occ_mean,
        turn_code=TURN_CODE[movement.turn],
        lane_count=movement.lane_count,
        is_green=int(green),
        min_green_done=int(min_green_done),
    )


def build_frame(world: WorldState, signal: SignalState, since: float) -> np.ndarray:
    """One 12x7 snapshot; rows beyond the real movement count stay zero."""
    frame = np.zeros((N_MOVEMENT_SLOTS, N_FEATURES), dtype=np.float64)
    for m in world.topology.movements:
        frame[m.id - 1] = encode_movement(world, m.id, signal, since).as_array()
    return frame


def build_state(frames: Sequence[np.ndarray]) -> np.ndarray:
    """Stack the last five frames oldest-first, replicating the earliest one
    backwards when the history is still short."""
    if len(frames) == 0:
        raise ValueError("need at least one frame")
    window = list(frames[-N_FRAMES:])
    while len(window) < N_FRAMES:
        window.insert(0, window[0])
    state = np.stack(window, axis=0)
    if state.shape != (N_FRAMES, N_MOVEMENT_SLOTS, N_FEATURES):
        raise ValueError(f"bad frame shape {state.shape}")
    return state


def compute_reward(world: WorldState) -> float:
    """Negative mean queue length over the real (non-padded) movements."""
    queues = world.queue_lengths()
    if not queues:
        return 0.0
    return -sum(queues.values()) / len(queues)
