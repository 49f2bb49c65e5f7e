"""Intersection geometry: approaches, movements, phases, and their validation.

An intersection is described by a JSON document (see scenarios/ for the
shipped ones). Approaches carry incoming/outgoing lane counts and lengths;
movements are lane-to-lane connections grouped under a turn kind; phases are
sets of movements that may hold green simultaneously, checked against a
declared conflict table.

Lane addressing convention: lanes are 1-based per approach and side, written
as e.g. ``N.in.2`` / ``S.out.1`` in error messages and event logs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

MAX_MOVEMENTS = 12

TURN_KINDS = ("straight", "left", "right")


class TopologyError(ValueError):
    """Raised for unparsable or internally inconsistent intersection configs."""


@dataclass(frozen=True)
class Approach:
    name: str
    n_in: int
    n_out: int
    length_in: float = 150.0
    length_out: float = 100.0


@dataclass(frozen=True)
class Movement:
    id: int
    from_approach: str
    to_approach: str
    turn: str  # straight | left | right
    from_lanes: tuple[int, ...]
    to_lanes: tuple[int, ...]

    @property
    def lane_count(self) -> int:
        return len(self.from_lanes)


@dataclass(frozen=True)
class Phase:
    id: int
    movements: tuple[int, ...]


@dataclass(frozen=True)
class IntersectionTopology:
    name: str
    approaches: tuple[Approach, ...]
    movements: tuple[Movement, ...]
    phases: tuple[Phase, ...]
    conflicts: frozenset[frozenset[int]] = field(default_factory=frozenset)

    @property
    def n_movements(self) -> int:
        return len(self.movements)

    @property
    def n_phases(self) -> int:
        return len(self.phases)

    def approach(self, name: str) -> Approach:
        for a in self.approaches:
            if a.name == name:
                return a
        raise TopologyError(f"unknown approach {name!r}")

    def movement(self, movement_id: int) -> Movement:
        try:
            m = self.movements[movement_id - 1]
        except IndexError:
            raise TopologyError(f"unknown movement {movement_id}") from None
        return m

    def phase(self, phase_id: int) -> Phase:
        try:
            return self.phases[phase_id - 1]
        except IndexError:
            raise TopologyError(f"unknown phase {phase_id}") from None

    @property
    def phase_movement_map(self) -> dict[int, tuple[int, ...]]:
        """Phase id -> movement ids (the phase-to-lane mapping used downstream)."""
        return {p.id: p.movements for p in self.phases}

    def movements_from(self, approach_name: str) -> list[Movement]:
        return [m for m in self.movements if m.from_approach == approach_name]

    def phases_serving(self, movement_id: int) -> list[int]:
        return [p.id for p in self.phases if movement_id in p.movements]


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise TopologyError(msg)


def validate_topology(topo: IntersectionTopology) -> IntersectionTopology:
    _require(len(topo.approaches) >= 2, "need at least two approaches")
    names = [a.name for a in topo.approaches]
    _require(len(set(names)) == len(names), "duplicate approach names")
    for a in topo.approaches:
        _require(a.n_in >= 1 and a.n_out >= 1, f"approach {a.name}: lane counts must be >= 1")
        _require(a.length_in > 0 and a.length_out > 0, f"approach {a.name}: lengths must be > 0")

    m_count = len(topo.movements)
    _require(1 <= m_count <= MAX_MOVEMENTS, f"movement count {m_count} outside 1..{MAX_MOVEMENTS}")
    for i, m in enumerate(topo.movements, start=1):
        _require(m.id == i, f"movement ids must be contiguous from 1, got {m.id} at position {i}")
        _require(m.turn in TURN_KINDS, f"movement {m.id}: bad turn kind {m.turn!r}")
        src = topo.approach(m.from_approach)
        dst = topo.approach(m.to_approach)
        _require(m.from_approach != m.to_approach, f"movement {m.id}: u-turns not modelled")
        _require(len(m.from_lanes) == len(m.to_lanes) >= 1,
                 f"movement {m.id}: from_lanes and to_lanes must be equal-length, non-empty")
        _require(all(1 <= l <= src.n_in for l in m.from_lanes),
                 f"movement {m.id}: from_lanes outside 1..{src.n_in} of {src.name}")
        _require(all(1 <= l <= dst.n_out for l in m.to_lanes),
                 f"movement {m.id}: to_lanes outside 1..{dst.n_out} of {dst.name}")

    # One movement per incoming lane: the car-following engine assumes a lane
    # feeds exactly one lane-to-lane link.
    seen_in: dict[tuple[str, int], int] = {}
    for m in topo.movements:
        for l in m.from_lanes:
            key = (m.from_approach, l)
            _require(key not in seen_in,
                     f"incoming lane {key[0]}.in.{key[1]} assigned to movements "
                     f"{seen_in.get(key)} and {m.id}")
            seen_in[key] = m.id

    _require(len(topo.phases) >= 1, "need at least one phase")
    movement_ids = {m.id for m in topo.movements}
    covered: set[int] = set()
    for i, p in enumerate(topo.phases, start=1):
        _require(p.id == i, f"phase ids must be contiguous from 1, got {p.id} at position {i}")
        _require(len(p.movements) >= 1, f"phase {p.id} is empty")
        for mid in p.movements:
            _require(mid in movement_ids, f"phase {p.id}: unknown movement {mid}")
        covered.update(p.movements)
        members = sorted(p.movements)
        for a_idx in range(len(members)):
            for b_idx in range(a_idx + 1, len(members)):
                pair = frozenset((members[a_idx], members[b_idx]))
                _require(pair not in topo.conflicts,
                         f"phase {p.id}: conflicting movements {members[a_idx]} and "
                         f"{members[b_idx]} share the phase")
        # Concurrently green links must not feed the same outgoing lane, or the
        # merge would break the headway guarantee.
        targets: dict[tuple[str, int], int] = {}
        for mid in members:
            m = topo.movement(mid)
            for l in m.to_lanes:
                key = (m.to_approach, l)
                _require(key not in targets,
                         f"phase {p.id}: movements {targets.get(key)} and {mid} both feed "
                         f"{key[0]}.out.{key[1]}")
                targets[key] = mid

    missing = movement_ids - covered
    _require(not missing, f"movements {sorted(missing)} appear in no phase")
    return topo


def load_topology(config_text: str) -> IntersectionTopology:
    """Parse and validate an intersection config from JSON text."""
    try:
        raw = json.loads(config_text)
    except json.JSONDecodeError as e:
        raise TopologyError(f"config does not parse: {e}") from e
    try:
        approaches = tuple(
            Approach(
                name=str(a["name"]),
                n_in=int(a["n_in"]),
                n_out=int(a["n_out"]),
                length_in=float(a.get("length_in", 150.0)),
                length_out=float(a.get("length_out", 100.0)),
            )
            for a in raw["approaches"]
        )
        movements = tuple(
            Movement(
                id=int(m["id"]),
                from_approach=str(m["from"]),
                to_approach=str(m["to"]),
                turn=str(m["turn"]),
                from_lanes=tuple(int(l) for l in m["from_lanes"]),
                to_lanes=tuple(int(l) for l in m["to_lanes"]),
            )
            for m in raw["movements"]
        )
        phases = tuple(
            Phase(id=int(p["id"]), movements=tuple(int(m) for m in p["movements"]))
            for p in raw["phases"]
        )
        conflicts = frozenset(
            frozenset((int(a), int(b))) for a, b in raw.get("conflicts", [])
        )
    except (KeyError, TypeError, ValueError) as e:
        raise TopologyError(f"malformed config: {e}") from e
    topo = IntersectionTopology(
        name=str(raw.get("name", "intersection")),
        approaches=approaches,
        movements=movements,
        phases=phases,
        conflicts=conflicts,
    )
    return validate_topology(topo)


def load_topology_file(path: str) -> IntersectionTopology:
    with open(path, "r", encoding="utf-8") as f:
        return load_topology(f.read())
