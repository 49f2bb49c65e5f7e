"""Microscopic vehicle dynamics on a signal-controlled intersection.

The model is a simplified Krauss car-follower on lane-to-lane links: each
incoming lane feeds exactly one outgoing lane, red/yellow signals act as a
stationary virtual leader at the stop line, and a structural no-pass clamp
guarantees bumper-to-bumper gaps never fall below the minimum headway.

Lanes update front-to-back in one scalar pass per step: the safe-speed rule
reads the leader's pre-step state (synchronous update), while the position
clamp uses the leader's already-final position, which is what makes the
headway bound structural rather than approximate. Update order per step:
arrivals -> insertions -> outgoing lanes -> incoming lanes (their front
vehicles chain onto the freshly updated outgoing rears) -> exits and
transfers. Everything is driven by one seeded numpy Generator, so a fixed
(topology, demand, seed, controller) tuple replays bit-identically.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .topology import IntersectionTopology

# Vehicle kinematics (SUMO-like defaults; the headway and speed cap are fixed
# requirements, the rest are model constants).
V_MAX = 13.9          # m/s hard speed cap
ACCEL = 2.6           # m/s^2
DECEL = 4.5           # m/s^2 comfortable braking, also the safety bound
TAU = 1.0             # s driver reaction time in the safe-speed rule
MIN_GAP = 2.5         # m minimum bumper-to-bumper gap
STOP_SPEED = 0.1      # m/s below this a vehicle counts as waiting
FOOTPRINT_REGULAR = 5.0
FOOTPRINT_EMERGENCY = 7.0
JUNCTION_LENGTH = 20.0  # m of box travel folded into the outgoing segment

EMERGENCY_CLASSES = ("police", "ambulance", "fire_truck")
VEHICLE_CLASSES = ("regular",) + EMERGENCY_CLASSES

_BT = DECEL * TAU
_BT2 = _BT * _BT
_INF = math.inf


def footprint_for(vclass: str) -> float:
    return FOOTPRINT_EMERGENCY if vclass in EMERGENCY_CLASSES else FOOTPRINT_REGULAR


@dataclass(slots=True)
class Vehicle:
    """Identity plus slowly-changing state; fast state lives in lane buffers."""

    id: int
    vclass: str
    desired_speed: float
    movement: int
    entry_time: float
    footprint: float
    position: float = 0.0
    speed: float = 0.0
    exit_time: float | None = None
    accumulated_wait: float = 0.0

    @property
    def is_emergency(self) -> bool:
        return self.vclass in EMERGENCY_CLASSES


class Lane:
    """One lane segment; parallel per-vehicle lists ordered rear -> front."""

    __slots__ = (
        "key", "approach", "side", "index", "length", "link_out",
        "vehicles", "pos", "speed", "wait", "vdes", "flen", "stopped",
        "occupied_len", "movement_id",
    )

    def __init__(self, key: str, approach: str, side: str, index: int, length: float):
        self.key = key
        self.approach = approach
        self.side = side            # "in" | "out"
        self.index = index
        self.length = length
        self.link_out: Lane | None = None    # set for incoming lanes
        self.movement_id: int | None = None  # set for incoming lanes
        self.vehicles: list[Vehicle] = []
        self.pos: list[float] = []
        self.speed: list[float] = []
        self.wait: list[float] = []
        self.vdes: list[float] = []
        self.flen: list[float] = []
        self.stopped: list[bool] = []
        self.occupied_len = 0.0

    def __len__(self) -> int:
        return len(self.vehicles)

    def rear_space(self) -> float:
        """Free length behind the rearmost vehicle (full length when empty)."""
        if not self.vehicles:
            return self.length
        return self.pos[0] - self.flen[0]

    def append_front(self, veh: Vehicle, pos: float, speed: float) -> None:
        self.vehicles.append(veh)
        self.pos.append(pos)
        self.speed.append(speed)
        self.wait.append(veh.accumulated_wait)
        self.vdes.append(veh.desired_speed)
        self.flen.append(veh.footprint)
        self.stopped.append(speed < STOP_SPEED)
        self.occupied_len += veh.footprint

    def insert_rear(self, veh: Vehicle, pos: float, speed: float) -> None:
        self.vehicles.insert(0, veh)
        self.pos.insert(0, pos)
        self.speed.insert(0, speed)
        self.wait.insert(0, veh.accumulated_wait)
        self.vdes.insert(0, veh.desired_speed)
        self.flen.insert(0, veh.footprint)
        self.stopped.insert(0, speed < STOP_SPEED)
        self.occupied_len += veh.footprint

    def pop_front(self) -> tuple[Vehicle, float, float]:
        veh = self.vehicles.pop()
        pos = self.pos.pop()
        speed = self.speed.pop()
        veh.accumulated_wait = self.wait.pop()
        self.vdes.pop()
        self.flen.pop()
        self.stopped.pop()
        self.occupied_len -= veh.footprint
        return veh, pos, speed

    def queue_count(self) -> int:
        return sum(1 for v in self.speed if v < STOP_SPEED)

    def sync_vehicles(self) -> None:
        for i, veh in enumerate(self.vehicles):
            veh.position = self.pos[i]
            veh.speed = self.speed[i]
            veh.accumulated_wait = self.wait[i]


@dataclass(slots=True)
class _LaneBacklog:
    emergency: deque = field(default_factory=deque)
    regular: deque = field(default_factory=deque)

    def head(self) -> Vehicle | None:
        if self.emergency:
            return self.emergency[0]
        if self.regular:
            return self.regular[0]
        return None

    def pop(self) -> Vehicle:
        return self.emergency.popleft() if self.emergency else self.regular.popleft()

    def push(self, veh: Vehicle) -> None:
        (self.emergency if veh.is_emergency else self.regular).append(veh)

    def __len__(self) -> int:
        return len(self.emergency) + len(self.regular)


class WorldState:
    """All vehicles, lanes, clock, rng and event log of one episode."""

    def __init__(self, topology: IntersectionTopology, rng: np.random.Generator,
                 record_events: bool = True):
        self.topology = topology
        self.rng = rng
        self.clock = 0.0
        self.record_events = record_events
        self.events: list[tuple] = []   # (t, kind, veh_id|None, lane|phase, speed)
        self.signal = None              # set by the episode driver

        self.in_lanes: list[Lane] = []
        self.out_lanes: list[Lane] = []
        self.lane_by_key: dict[str, Lane] = {}
        for ap in topology.approaches:
            for i in range(1, ap.n_out + 1):
                lane = Lane(f"{ap.name}.out.{i}", ap.name, "out", i,
                            ap.length_out + JUNCTION_LENGTH)
                self.out_lanes.append(lane)
                self.lane_by_key[lane.key] = lane
        for ap in topology.approaches:
            for i in range(1, ap.n_in + 1):
                lane = Lane(f"{ap.name}.in.{i}", ap.name, "in", i, ap.length_in)
                self.in_lanes.append(lane)
                self.lane_by_key[lane.key] = lane
        for m in topology.movements:
            for src, dst in zip(m.from_lanes, m.to_lanes):
                lane = self.lane_by_key[f"{m.from_approach}.in.{src}"]
                lane.link_out = self.lane_by_key[f"{m.to_approach}.out.{dst}"]
                lane.movement_id = m.id

        self.backlog: dict[str, _LaneBacklog] = {l.key: _LaneBacklog() for l in self.in_lanes}
        self.movement_in_lanes: dict[int, list[Lane]] = {
            m.id: [self.lane_by_key[f"{m.from_approach}.in.{l}"] for l in m.from_lanes]
            for m in topology.movements
        }
        out_keys = {
            m.id: sorted({f"{m.to_approach}.out.{l}" for l in m.to_lanes})
            for m in topology.movements
        }
        self.movement_out_lanes: dict[int, list[Lane]] = {
            mid: [self.lane_by_key[k] for k in keys] for mid, keys in out_keys.items()
        }

        # Stats streams: stop-line crossing times and occupancy samples per movement.
        self.crossing_times: dict[int, list[float]] = {m.id: [] for m in topology.movements}
        self.occ_times: list[float] = []
        self.occ_samples: dict[int, list[float]] = {m.id: [] for m in topology.movements}
        self._movement_total_len: dict[int, float] = {
            m.id: sum(self.lane_by_key[f"{m.from_approach}.in.{l}"].length
                      for l in m.from_lanes)
            for m in topology.movements
        }

        self.spawned = 0          # vehicles inserted into the network
        self.exited: list[Vehicle] = []
        self.all_records: list[Vehicle] = []
        self.min_gap_violations: list[tuple[float, str, float]] = []

    # -- event log -----------------------------------------------------------

    def log(self, kind: str, veh: int | None, lane: str, speed: float) -> None:
        if self.record_events:
            self.events.append((self.clock, kind, veh, lane, speed))

    # -- queries -------------------------------------------------------------

    def in_world_count(self) -> int:
        return sum(len(l) for l in self.in_lanes) + sum(len(l) for l in self.out_lanes)

    def queue_lengths(self) -> dict[int, int]:
        """Stopped-vehicle count per movement over its incoming lanes."""
        return {mid: sum(l.queue_count() for l in lanes)
                for mid, lanes in self.movement_in_lanes.items()}

    def out_lane_queues(self, approach: str) -> list[int]:
        return [l.queue_count() for l in self.out_lanes if l.approach == approach]

    def movement_stats(self, movement_id: int, since: float) -> tuple[float, float, float]:
        """(flow veh/s, max occupancy, mean occupancy) over (since, clock]."""
        if movement_id not in self.crossing_times:
            raise KeyError(f"unknown movement {movement_id}")
        if since > self.clock:
            raise ValueError("since is in the future")
        window = self.clock - since
        if window <= 0:
            return 0.0, 0.0, 0.0
        times = self.crossing_times[movement_id]
        n_cross = bisect_right(times, self.clock) - bisect_right(times, since)
        flow = n_cross / window
        lo = bisect_right(self.occ_times, since)
        hi = bisect_right(self.occ_times, self.clock)
        samples = self.occ_samples[movement_id][lo:hi]
        if not samples:
            return flow, 0.0, 0.0
        return flow, max(samples), math.fsum(samples) / len(samples)

    def sync_vehicles(self) -> None:
        for lane in self.in_lanes:
            lane.sync_vehicles()
        for lane in self.out_lanes:
            lane.sync_vehicles()

    def iter_lane_vehicles(self, lane: Lane):
        """Yield (vehicle, pos, speed, wait) rear to front without syncing."""
        for i, veh in enumerate(lane.vehicles):
            yield veh, lane.pos[i], lane.speed[i], lane.wait[i]

    # -- admission -----------------------------------------------------------

    def enqueue(self, veh: Vehicle, lane_key: str) -> None:
        self.backlog[lane_key].push(veh)

    def _try_insertions(self) -> None:
        for lane in self.in_lanes:
            queue = self.backlog[lane.key]
            while len(queue):
                veh = queue.head()
                space = lane.rear_space()
                if space < veh.footprint + MIN_GAP:
                    break
                queue.pop()
                pos0 = veh.footprint
                if lane.vehicles:
                    g_free = space - veh.footprint - MIN_GAP
                    lead_v = lane.speed[0]
                    vsafe = -_BT + math.sqrt(_BT2 + lead_v * lead_v + 2.0 * DECEL * g_free)
                    v0 = max(0.0, min(veh.desired_speed, V_MAX, vsafe))
                else:
                    v0 = min(veh.desired_speed, V_MAX)
                veh.entry_time = self.clock
                veh.position = pos0
                veh.speed = v0
                lane.insert_rear(veh, pos0, v0)
                # new vehicles start flagged as moving so the first advance
                # emits the stop edge the waiting-time recomputation relies on
                lane.stopped[0] = False
                self.spawned += 1
                self.all_records.append(veh)
                self.log("enter", veh.id, lane.key, v0)

    # -- dynamics ------------------------------------------------------------

    def _advance_lane(self, lane: Lane, dt: float,
                      lead_pos: float, lead_v: float, lead_flen: float,
                      lead_gap: float, hard_limit: float) -> None:
        """One scalar front-to-back pass: Krauss safe speed against the
        leader's pre-step state, position clamped against the leader's final
        position. (lead_*, lead_gap, hard_limit) describe the front vehicle's
        virtual leader; hard_limit is its final-position bound (+inf free)."""
        pos = lane.pos
        spd = lane.speed
        vdes = lane.vdes
        flen = lane.flen
        wait = lane.wait
        stopped = lane.stopped
        vehicles = lane.vehicles
        record = self.record_events
        limit = hard_limit
        for i in range(len(pos) - 1, -1, -1):
            p = pos[i]
            v = spd[i]
            g = lead_pos - lead_flen - p - lead_gap
            if g < 0.0:
                g = 0.0
            vsafe = math.sqrt(_BT2 + lead_v * lead_v + 2.0 * DECEL * g) - _BT
            vn = v + ACCEL * dt
            vd = vdes[i]
            if vn > vd:
                vn = vd
            if vn > V_MAX:
                vn = V_MAX
            if vn > vsafe:
                vn = vsafe
            if vn < 0.0:
                vn = 0.0
            p_new = p + vn * dt
            if p_new > limit:
                p_new = limit
                if p_new < p:
                    p_new = p
                vn = (p_new - p) / dt
            # next iteration: this vehicle is the follower's leader
            lead_pos = p
            lead_v = v
            lead_flen = flen[i]
            lead_gap = MIN_GAP
            limit = p_new - flen[i] - MIN_GAP
            pos[i] = p_new
            spd[i] = vn
            is_stopped = vn < STOP_SPEED
            if is_stopped:
                wait[i] += dt
            if is_stopped != stopped[i]:
                stopped[i] = is_stopped
                if record:
                    self.log("stop" if is_stopped else "go",
                             vehicles[i].id, lane.key, vn)

    def step(self, dt: float, green_movements: frozenset[int],
             arrivals: list[tuple[Vehicle, str]] | None = None,
             audit_gaps: bool = False) -> None:
        """Advance all vehicles by dt under the given green-movement set.

        `arrivals` are (vehicle, lane_key) pairs generated for this step; they
        join the per-lane backlog and enter as soon as physical space allows.
        """
        if not (0.0 < dt <= 1.0):
            raise ValueError("dt must be in (0, 1]")
        if arrivals:
            for veh, lane_key in arrivals:
                self.enqueue(veh, lane_key)
        self._try_insertions()
        # From here on, event timestamps carry the step-end time: a stop/go
        # edge logged at t covers the step (t-dt, t], matching how waiting
        # time accumulates.
        self.clock += dt

        for lane in self.out_lanes:
            if lane.vehicles:
                self._advance_lane(lane, dt, _INF, 0.0, 0.0, 0.0, _INF)

        for lane in self.in_lanes:
            if not lane.vehicles:
                continue
            stop_line = lane.length
            use_wall = lane.movement_id not in green_movements
            if use_wall:
                # Vehicles that cannot comfortably stop any more legally clear
                # the line on yellow; they keep chaining onto the exit lane.
                front_pos = lane.pos[-1]
                front_v = lane.speed[-1]
                gap_to_line = stop_line - front_pos
                if gap_to_line < 0.0:
                    gap_to_line = 0.0
                if front_v * front_v > 2.0 * DECEL * gap_to_line + 1e-9:
                    use_wall = False
            if use_wall:
                self._advance_lane(lane, dt, stop_line, 0.0, 0.0, 0.0, stop_line)
                continue
            out = lane.link_out
            if out is not None and out.vehicles:
                lead_pos = stop_line + out.pos[0]
                lead_v = out.speed[0]
                lead_flen = out.flen[0]
                limit = lead_pos - lead_flen - MIN_GAP
                self._advance_lane(lane, dt, lead_pos, lead_v, lead_flen,
                                   MIN_GAP, limit)
            else:
                self._advance_lane(lane, dt, _INF, 0.0, 0.0, 0.0, _INF)

        # Exits: rear bumper past the end of the outgoing segment.
        for lane in self.out_lanes:
            while lane.vehicles and lane.pos[-1] - lane.flen[-1] >= lane.length:
                veh, pos, speed = lane.pop_front()
                veh.exit_time = self.clock
                veh.position = pos
                veh.speed = speed
                self.exited.append(veh)
                self.log("exit", veh.id, lane.key, speed)

        # Transfers: front bumper past the stop line moves onto the exit lane.
        for lane in self.in_lanes:
            while lane.vehicles and lane.pos[-1] > lane.length:
                out = lane.link_out
                veh, pos, speed = lane.pop_front()
                out.insert_rear(veh, pos - lane.length, speed)
                self.crossing_times[veh.movement].append(self.clock)
                self.log("cross", veh.id, out.key, speed)

        # Occupancy sample per movement (fraction of incoming length covered).
        self.occ_times.append(self.clock)
        for mid, lanes in self.movement_in_lanes.items():
            occ = 0.0
            for l in lanes:
                occ += l.occupied_len
            self.occ_samples[mid].append(occ / self._movement_total_len[mid])

        if audit_gaps:
            self._audit_gaps()

    def _audit_gaps(self) -> None:
        for lane in self.in_lanes:
            self._audit_lane(lane)
        for lane in self.out_lanes:
            self._audit_lane(lane)

    def _audit_lane(self, lane: Lane) -> None:
        pos = lane.pos
        flen = lane.flen
        for i in range(len(pos) - 1):
            gap = pos[i + 1] - flen[i + 1] - pos[i]
            if gap < MIN_GAP - 1e-9:
                self.min_gap_violations.append((self.clock, lane.key, gap))


def step_dynamics(world: WorldState, dt: float,
                  green_movements: frozenset[int] | None = None) -> WorldState:
    """Functional wrapper over WorldState.step for a green set taken from the
    attached signal when not given explicitly."""
    if green_movements is None:
        if world.signal is None:
            green_movements = frozenset()
        else:
            green_movements = world.signal.green_movements(world.topology)
    world.step(dt, green_movements)
    return world


def queue_lengths(world: WorldState) -> dict[int, int]:
    return world.queue_lengths()


def movement_stats(world: WorldState, movement_id: int, since: float):
    return world.movement_stats(movement_id, since)
