"""Built-in scenario registry plus loading of user scenario files.

A scenario file bundles an intersection topology with its demand profile:

    {"name": ..., "topology": {...}, "demand": {...}}

The three shipped scenarios (`songdo`, `yaumatei`, `massy`) carry the
published per-approach arrival rates; lane layouts, turning shares, and
conflict tables are constructed (see README).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .demand import DemandProfile, load_demand, validate_demand
from .topology import IntersectionTopology, TopologyError, load_topology

BUILTIN_SCENARIOS = ("songdo", "yaumatei", "massy")


@dataclass(frozen=True)
class Scenario:
    name: str
    topology: IntersectionTopology
    demand: DemandProfile


def load_scenario_text(text: str) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise TopologyError(f"scenario does not parse: {e}") from e
    if "topology" not in raw or "demand" not in raw:
        raise TopologyError("scenario needs 'topology' and 'demand' sections")
    topo = load_topology(json.dumps(raw["topology"]))
    demand = validate_demand(load_demand(json.dumps(raw["demand"])), topo)
    return Scenario(name=str(raw.get("name", topo.name)), topology=topo, demand=demand)


def get_scenario(name_or_path: str) -> Scenario:
    """Resolve a built-in scenario name or a path to a scenario JSON file."""
    if name_or_path in BUILTIN_SCENARIOS:
        text = (resources.files("crosslight") / "scenarios"
                / f"{name_or_path}.json").read_text(encoding="utf-8")
        return load_scenario_text(text)
    with open(name_or_path, "r", encoding="utf-8") as f:
        return load_scenario_text(f.read())
