"""Shared test fixtures: miniature topologies, vehicle injection, and the
independent event-log metrics recomputation used as the oracle against
compute_metrics."""

from __future__ import annotations

import json

import numpy as np

from crosslight.demand import ApproachDemand, DemandProfile
from crosslight.dynamics import Vehicle, WorldState, footprint_for
from crosslight.signals import SignalState
from crosslight.topology import load_topology

# One straight link A -> B, one phase. Lane lengths default 150/100.
SINGLE_LINK = {
    "name": "single",
    "approaches": [
        {"name": "A", "n_in": 1, "n_out": 1},
        {"name": "B", "n_in": 1, "n_out": 1},
    ],
    "movements": [
        {"id": 1, "from": "A", "to": "B", "turn": "straight",
         "from_lanes": [1], "to_lanes": [1]},
    ],
    "phases": [{"id": 1, "movements": [1]}],
}

# Two crossing streets, two phases, two movements.
TWO_PHASE = {
    "name": "twophase",
    "approaches": [
        {"name": "N", "n_in": 1, "n_out": 1},
        {"name": "S", "n_in": 1, "n_out": 1},
        {"name": "E", "n_in": 1, "n_out": 1},
        {"name": "W", "n_in": 1, "n_out": 1},
    ],
    "movements": [
        {"id": 1, "from": "N", "to": "S", "turn": "straight",
         "from_lanes": [1], "to_lanes": [1]},
        {"id": 2, "from": "E", "to": "W", "turn": "straight",
         "from_lanes": [1], "to_lanes": [1]},
    ],
    "phases": [
        {"id": 1, "movements": [1]},
        {"id": 2, "movements": [2]},
    ],
    "conflicts": [[1, 2]],
}


def topo(spec_dict, **overrides):
    d = json.loads(json.dumps(spec_dict))
    d.update(overrides)
    return load_topology(json.dumps(d))


def single_link_topology(length_in=150.0, length_out=100.0):
    d = json.loads(json.dumps(SINGLE_LINK))
    for a in d["approaches"]:
        a["length_in"] = length_in
        a["length_out"] = length_out
    return load_topology(json.dumps(d))


def empty_demand(topology):
    return DemandProfile(name="none", approaches=tuple(
        ApproachDemand(approach=a.name, rate_mean=0.0) for a in topology.approaches))


def make_world(topology, seed=0, with_signal=True, record_events=True):
    rng = np.random.Generator(np.random.PCG64(seed))
    world = WorldState(topology, rng, record_events=record_events)
    if with_signal:
        world.signal = SignalState()
    return world


_NEXT_TEST_ID = [10_000]


def put_vehicle(world, lane_key, pos, speed=0.0, vclass="regular",
                desired_speed=10.0, movement=None):
    """Inject a vehicle directly into a lane (kept sorted by position)."""
    lane = world.lane_by_key[lane_key]
    if movement is None:
        movement = lane.movement_id if lane.movement_id is not None else 1
    _NEXT_TEST_ID[0] += 1
    veh = Vehicle(id=_NEXT_TEST_ID[0], vclass=vclass, desired_speed=desired_speed,
                  movement=movement, entry_time=world.clock,
                  footprint=footprint_for(vclass), position=pos, speed=speed)
    if lane.vehicles and pos > float(lane.pos[-1]):
        lane.append_front(veh, pos, speed)
    else:
        lane.insert_rear(veh, pos, speed)
    world.spawned += 1
    world.all_records.append(veh)
    return veh


def recompute_metrics_from_events(events, records, t_end, dt=0.5, warmup=0.0):
    """Second, independent implementation of the per-vehicle metrics.

    Reads only the event log: enter/exit give travel times, stop/go edges give
    waiting (an edge at t covers the step (t-dt, t]). Returns dicts keyed by
    vehicle id: travel_time (completed only) and wait."""
    enters: dict[int, float] = {}
    exits: dict[int, float] = {}
    stop_open: dict[int, float] = {}
    wait: dict[int, float] = {}
    for t, kind, veh, _lane, _speed in events:
        if veh is None:
            continue
        if kind == "enter":
            enters[veh] = t
            wait.setdefault(veh, 0.0)
        elif kind == "stop":
            stop_open[veh] = t
        elif kind == "go":
            t0 = stop_open.pop(veh)
            wait[veh] = wait.get(veh, 0.0) + (t - t0)
        elif kind == "exit":
            exits[veh] = t
            if veh in stop_open:
                t0 = stop_open.pop(veh)
                wait[veh] = wait.get(veh, 0.0) + (t - t0) + dt
    for veh, t0 in stop_open.items():
        wait[veh] = wait.get(veh, 0.0) + (t_end - t0) + dt
    travel = {v: exits[v] - enters[v] for v in exits if v in enters}
    keep = {r.id for r in records if r.entry_time >= warmup}
    return ({v: tt for v, tt in travel.items() if v in keep},
            {v: w for v, w in wait.items() if v in keep})
