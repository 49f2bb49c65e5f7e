"""Episode driver: one seeded run of the simulator under some controller.

The driver owns the world and the signal head, advances dynamics in 0.5 s
steps between control decisions every `delta_t` seconds, and exposes the
pieces controllers need: feasible actions, queue stats, the stacked
observation tensor, and scene observations. Distinct episodes share nothing
mutable, so seeds can run in parallel processes if desired.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from . import features
from .demand import ArrivalProcess, DemandProfile
from .dynamics import WorldState
from .signals import SignalState, apply_action, close_history, feasible_actions, tick_signal
from .topology import IntersectionTopology

DT = 0.5
DEFAULT_DELTA_T = 5.0
DEFAULT_T_MAX = 600.0
DEFAULT_WARMUP = 60.0


class Episode:
    def __init__(self, topology: IntersectionTopology, demand: DemandProfile,
                 seed: int, t_max: float = DEFAULT_T_MAX,
                 delta_t: float = DEFAULT_DELTA_T, dt: float = DT,
                 warmup: float = DEFAULT_WARMUP, record_events: bool = True,
                 audit_gaps: bool = False, with_emergencies: bool = True):
        if delta_t <= 0 or t_max <= 0 or not (0 < dt <= 1):
            raise ValueError("bad episode timing parameters")
        self.topology = topology
        self.demand = demand
        self.seed = seed
        self.t_max = t_max
        self.delta_t = delta_t
        self.dt = dt
        self.warmup = warmup
        self.audit_gaps = audit_gaps

        self.rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        self.world = WorldState(topology, self.rng, record_events=record_events)
        self.signal = SignalState()
        self.world.signal = self.signal
        self.arrivals = ArrivalProcess(
            demand, topology, self.rng, horizon=t_max,
            emergency_seed=seed if with_emergencies else None,
            emergency_start=warmup,
        )
        self.tick_index = 0
        self.last_decision_time = 0.0
        self._frames: deque[np.ndarray] = deque(maxlen=features.N_FRAMES)
        self._frame_tick = -1

    # -- state exposed to controllers -----------------------------------------

    @property
    def clock(self) -> float:
        return self.world.clock

    @property
    def done(self) -> bool:
        return self.world.clock >= self.t_max - 1e-9

    @property
    def n_ticks(self) -> int:
        return int(round(self.t_max / self.delta_t))

    def feasible(self) -> frozenset[int]:
        return feasible_actions(self.signal, self.topology)

    def feasible_mask(self) -> np.ndarray:
        allowed = self.feasible()
        return np.array([p.id in allowed for p in self.topology.phases], dtype=bool)

    def state_tensor(self) -> np.ndarray:
        """Stacked observation for the current decision tick (built once per tick)."""
        if self._frame_tick != self.tick_index:
            frame = features.build_frame(self.world, self.signal, self.last_decision_time)
            self._frames.append(frame)
            self._frame_tick = self.tick_index
        return features.build_state(list(self._frames))

    def reward(self) -> float:
        return features.compute_reward(self.world)

    # -- advancing -------------------------------------------------------------

    def advance(self, action: int) -> float:
        """Apply the chosen phase and run dynamics until the next decision
        tick. Returns the post-transition reward."""
        was_yellow = self.signal.in_yellow
        apply_action(self.signal, action, self.topology)
        if self.signal.in_yellow and not was_yellow:
            self.world.log("yellow", None, f"phase:{self.signal.pending_phase}", 0.0)
        self.last_decision_time = self.world.clock
        steps = int(round(self.delta_t / self.dt))
        for _ in range(steps):
            yellow_before = self.signal.in_yellow
            tick_signal(self.signal, self.dt)
            if yellow_before and not self.signal.in_yellow:
                self.world.log("green", None, f"phase:{self.signal.current_phase}", 0.0)
            green = self.signal.green_movements(self.topology)
            batch = self.arrivals.sample(self.dt, self.world.clock)
            self.world.step(self.dt, green, arrivals=batch, audit_gaps=self.audit_gaps)
        self.tick_index += 1
        return self.reward()

    # -- results ---------------------------------------------------------------

    def vehicle_records(self):
        """All vehicles that entered the network, with live state synced."""
        self.world.sync_vehicles()
        return list(self.world.all_records)

    def signal_history(self):
        return close_history(self.signal)

    def events(self):
        return list(self.world.events)


class TrafficEnv:
    """Gym-flavoured facade over Episode for policy training."""

    def __init__(self, topology: IntersectionTopology, demand: DemandProfile,
                 seed: int, t_max: float = DEFAULT_T_MAX,
                 delta_t: float = DEFAULT_DELTA_T,
                 with_emergencies: bool = False):
        self.topology = topology
        self.demand = demand
        self.t_max = t_max
        self.delta_t = delta_t
        self.with_emergencies = with_emergencies
        self._seed = seed
        self._episode_count = 0
        self.episode: Episode | None = None

    def reset(self) -> tuple[np.ndarray, np.ndarray]:
        seed = self._seed + self._episode_count
        self._episode_count += 1
        self.episode = Episode(
            self.topology, self.demand, seed=seed, t_max=self.t_max,
            delta_t=self.delta_t, record_events=False,
            with_emergencies=self.with_emergencies,
        )
        return self.episode.state_tensor(), self.episode.feasible_mask()

    def step(self, action: int):
        ep = self.episode
        reward = ep.advance(int(action))
        done = ep.done
        if done:
            state = ep.state_tensor()
            mask = ep.feasible_mask()
        else:
            state = ep.state_tensor()
            mask = ep.feasible_mask()
        return state, reward, done, mask
