"""Ground-truth scene observations and their textual descriptions.

`observe_approach` reads exact per-lane facts out of the world (counts,
queues, occupancy, congestion level, emergency vehicles with distance to the
stop line). `describe_scene` renders those facts into a deterministic text
summary; `aggregate_phases` regroups direction-level facts into phase-level
ones using the topology's phase-to-movement map, losing nothing at the facts
level.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dynamics import WorldState
from .topology import IntersectionTopology

CONGESTION_MEDIUM = 0.3
CONGESTION_HIGH = 0.6

CLASS_DISPLAY = {
    "police": "police car",
    "ambulance": "ambulance",
    "fire_truck": "fire truck",
}


def congestion_level(occupancy: float) -> str:
    if occupancy < CONGESTION_MEDIUM:
        return "low"
    if occupancy < CONGESTION_HIGH:
        return "medium"
    return "high"


@dataclass(frozen=True)
class EmergencyEntry:
    vclass: str
    distance_to_stop: float
    speed: float
    wait_s: float
    vehicle_id: int

    def as_dict(self) -> dict:
        return {
            "class": self.vclass,
            "distance_to_stop_m": round(self.distance_to_stop, 2),
            "speed_mps": round(self.speed, 2),
            "wait_s": round(self.wait_s, 2),
            "vehicle_id": self.vehicle_id,
        }


@dataclass(frozen=True)
class LaneRecord:
    lane_index: int
    movement_id: int
    turn: str
    vehicle_count: int
    queue_count: int
    occupancy: float
    congestion: str
    emergencies: tuple[EmergencyEntry, ...] = ()

    def as_dict(self) -> dict:
        return {
            "lane": self.lane_index,
            "movement": self.movement_id,
            "turn": self.turn,
            "vehicles": self.vehicle_count,
            "queued": self.queue_count,
            "occupancy": round(self.occupancy, 4),
            "congestion": self.congestion,
            "emergencies": [e.as_dict() for e in self.emergencies],
        }


@dataclass(frozen=True)
class SceneObservation:
    direction: str
    lanes: tuple[LaneRecord, ...]

    @property
    def has_emergency(self) -> bool:
        return any(l.emergencies for l in self.lanes)

    @property
    def total_vehicles(self) -> int:
        return sum(l.vehicle_count for l in self.lanes)

    @property
    def total_queue(self) -> int:
        return sum(l.queue_count for l in self.lanes)

    def as_dict(self) -> dict:
        return {"direction": self.direction,
                "lanes": [l.as_dict() for l in self.lanes]}


@dataclass(frozen=True)
class SceneDescription:
    direction: str
    text: str
    facts: SceneObservation


@dataclass(frozen=True)
class PhaseDescription:
    phase_id: int
    text: str
    movement_ids: tuple[int, ...]
    has_emergency: bool
    lanes: tuple[tuple[str, LaneRecord], ...]  # (direction, lane record)
    queue_total: int
    emergencies: tuple[EmergencyEntry, ...] = ()

    def as_dict(self) -> dict:
        return {
            "phase": self.phase_id,
            "movements": list(self.movement_ids),
            "queue_total": self.queue_total,
            "has_emergency": self.has_emergency,
            "emergencies": [e.as_dict() for e in self.emergencies],
            "lanes": [{"direction": d, **rec.as_dict()} for d, rec in self.lanes],
        }


def observe_approach(world: WorldState, direction: str) -> SceneObservation:
    world.topology.approach(direction)  # raises for unknown directions
    records = []
    for lane in world.in_lanes:
        if lane.approach != direction:
            continue
        occ = lane.occupied_len / lane.length
        queue = lane.queue_count()
        emergencies = []
        for veh, pos, speed, wait in world.iter_lane_vehicles(lane):
            if veh.is_emergency:
                emergencies.append(EmergencyEntry(
                    vclass=veh.vclass,
                    distance_to_stop=lane.length - pos,
                    speed=speed,
                    wait_s=wait,
                    vehicle_id=veh.id,
                ))
        movement = world.topology.movement(lane.movement_id)
        records.append(LaneRecord(
            lane_index=lane.index,
            movement_id=movement.id,
            turn=movement.turn,
            vehicle_count=len(lane),
            queue_count=queue,
            occupancy=occ,
            congestion=congestion_level(occ),
            emergencies=tuple(emergencies),
        ))
    return SceneObservation(direction=direction, lanes=tuple(records))


def describe_scene(obs: SceneObservation) -> SceneDescription:
    lines = [f"Traffic report for the {obs.direction} approach:"]
    if obs.total_vehicles == 0:
        lines.append("No vehicles present on any lane.")
    else:
        for lane in obs.lanes:
            lines.append(
                f"Lane {lane.lane_index} ({lane.turn}): {lane.vehicle_count} vehicles, "
                f"{lane.queue_count} queued, occupancy {lane.occupancy * 100:.0f}%, "
                f"congestion {lane.congestion}."
            )
    emergencies = [e for lane in obs.lanes for e in lane.emergencies]
    if emergencies:
        for e in emergencies:
            lines.append(
                f"EMERGENCY: a {CLASS_DISPLAY[e.vclass]} is {e.distance_to_stop:.0f} m "
                f"from the stop line at {e.speed:.1f} m/s, waiting {e.wait_s:.0f} s."
            )
    else:
        lines.append("No emergency or special vehicles observed.")
    return SceneDescription(direction=obs.direction, text="\n".join(lines), facts=obs)


def aggregate_phases(descriptions: list[SceneDescription],
                     topology: IntersectionTopology) -> list[PhaseDescription]:
    """Regroup direction-level facts per phase via the phase->movement map."""
    by_direction = {d.direction: d for d in descriptions}
    for ap in topology.approaches:
        if ap.name not in by_direction:
            raise ValueError(f"missing scene description for direction {ap.name!r}")
    out = []
    for phase in topology.phases:
        lanes: list[tuple[str, LaneRecord]] = []
        for mid in phase.movements:
            movement = topology.movement(mid)
            desc = by_direction[movement.from_approach]
            for rec in desc.facts.lanes:
                if rec.movement_id == mid:
                    lanes.append((movement.from_approach, rec))
        emergencies = tuple(e for _, rec in lanes for e in rec.emergencies)
        queue_total = sum(rec.queue_count for _, rec in lanes)
        text_lines = [f"Phase {phase.id} serves movements "
                      f"{', '.join(str(m) for m in phase.movements)}:"]
        for direction, rec in lanes:
            text_lines.append(
                f"- {direction} lane {rec.lane_index} ({rec.turn}): "
                f"{rec.vehicle_count} vehicles, {rec.queue_count} queued, "
                f"congestion {rec.congestion}."
            )
        if emergencies:
            for e in emergencies:
                text_lines.append(
                    f"- EMERGENCY {CLASS_DISPLAY[e.vclass]} at {e.distance_to_stop:.0f} m, "
                    f"waiting {e.wait_s:.0f} s."
                )
        else:
            text_lines.append("- no emergency vehicles.")
        out.append(PhaseDescription(
            phase_id=phase.id,
            text="\n".join(text_lines),
            movement_ids=phase.movements,
            has_emergency=bool(emergencies),
            lanes=tuple(lanes),
            queue_total=queue_total,
            emergencies=emergencies,
        ))
    return out
