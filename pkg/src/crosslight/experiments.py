"""Multi-seed experiment runner, controller registry, and table export."""

from __future__ import annotations

import csv
import json

import torch

from .backends import BackendConfig, make_backend
from .controllers import (Controller, FixTimeController, MaxPressureController,
                          RLController, WebsterController)
from .metrics import MetricsReport, VehicleRecord, aggregate, compute_metrics
from .orchestrator import MetaController, run_episode
from .policy import PolicyAgent, PolicyNet, load_checkpoint
from .scenarios import Scenario

CONTROLLER_NAMES = ("fixtime", "webster", "maxpressure", "rl", "meta")


def fixed_seed_agent(n_phases: int, seed: int = 0) -> PolicyAgent:
    """Deterministically initialized (untrained) policy, for when no
    checkpoint is supplied."""
    torch.manual_seed(seed)
    torch.set_num_threads(1)
    return PolicyAgent(PolicyNet(n_phases))


def make_controller(name: str, scenario: Scenario,
                    policy_path: str | None = None,
                    backend_config: BackendConfig | None = None,
                    n_check: int = 3,
                    ablate: tuple[str, ...] = ()) -> Controller:
    n_phases = scenario.topology.n_phases
    if name == "fixtime":
        return FixTimeController()
    if name == "webster":
        return WebsterController()
    if name == "maxpressure":
        return MaxPressureController()
    if name in ("rl", "meta"):
        if policy_path:
            net = load_checkpoint(policy_path)
            if net.n_phases != n_phases:
                raise ValueError(
                    f"checkpoint built for {net.n_phases} phases, scenario has {n_phases}")
            torch.set_num_threads(1)
            agent = PolicyAgent(net)
        else:
            agent = fixed_seed_agent(n_phases)
        if name == "rl":
            return RLController(agent)
        backend = make_backend(backend_config or BackendConfig(kind="scripted"))
        return MetaController(agent, backend, n_check=n_check,
                              ablate_phase="phase" in ablate,
                              ablate_check="check" in ablate)
    raise ValueError(f"unknown controller {name!r}; choose from {CONTROLLER_NAMES}")


def run_experiment(scenario: Scenario, controller_name: str, seeds: list[int],
                   t_max: float = 600.0, delta_t: float = 5.0,
                   warmup: float = 60.0, record_events: bool = False,
                   controller_factory=None, **controller_opts) -> MetricsReport:
    """One episode per seed, aggregated. Controllers are rebuilt per seed so
    plan state never leaks across episodes."""
    if not seeds:
        raise ValueError("need at least one seed")
    per_seed = []
    for seed in seeds:
        if controller_factory is not None:
            controller = controller_factory()
        else:
            controller = make_controller(controller_name, scenario, **controller_opts)
        try:
            result = run_episode(scenario.topology, scenario.demand, controller,
                                 seed=seed, t_max=t_max, delta_t=delta_t,
                                 warmup=warmup, record_events=record_events)
        except Exception as e:
            raise RuntimeError(f"episode failed for seed {seed}: {e}") from e
        records = [VehicleRecord.from_vehicle(v) for v in result.records
                   if v.entry_time >= warmup]
        per_seed.append(compute_metrics(records))
    return aggregate(scenario.name, controller_name, seeds, per_seed)


CSV_COLUMNS = ["scenario", "controller", "ATT", "ATT_std", "AWT", "AWT_std",
               "AETT", "AETT_std", "AEWT", "AEWT_std", "seeds",
               "incomplete_count"]


def _cell(value: float | None) -> str:
    return "" if value is None else repr(value)


def export_table(reports: list[MetricsReport], path: str, fmt: str = "csv") -> None:
    if not reports:
        raise ValueError("no reports to export")
    if fmt == "csv":
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_COLUMNS)
            for r in reports:
                w.writerow([
                    r.scenario, r.controller,
                    _cell(r.att), _cell(r.att_std),
                    _cell(r.awt), _cell(r.awt_std),
                    _cell(r.aett), _cell(r.aett_std),
                    _cell(r.aewt), _cell(r.aewt_std),
                    len(r.seeds), r.incomplete_count,
                ])
    elif fmt == "json":
        payload = [{
            "scenario": r.scenario, "controller": r.controller,
            "ATT": r.att, "ATT_std": r.att_std,
            "AWT": r.awt, "AWT_std": r.awt_std,
            "AETT": r.aett, "AETT_std": r.aett_std,
            "AEWT": r.aewt, "AEWT_std": r.aewt_std,
            "seeds": list(r.seeds), "incomplete_count": r.incomplete_count,
            "per_seed": r.per_seed_values,
        } for r in reports]
        with open(path, "w") as f:
            json.dump(payload, f, indent=1)
            f.write("\n")
    else:
        raise ValueError(f"unknown export format {fmt!r}")


def read_table(path: str) -> list[dict]:
    """Parse an exported CSV back into typed rows (None for empty cells)."""
    rows = []
    with open(path, newline="") as f:
        for raw in csv.DictReader(f):
            row: dict = {"scenario": raw["scenario"], "controller": raw["controller"],
                         "seeds": int(raw["seeds"]),
                         "incomplete_count": int(raw["incomplete_count"])}
            for col in ("ATT", "ATT_std", "AWT", "AWT_std",
                        "AETT", "AETT_std", "AEWT", "AEWT_std"):
                row[col] = float(raw[col]) if raw[col] != "" else None
            rows.append(row)
    return rows


def write_events(events: list[tuple], path: str) -> None:
    """Event log as newline-delimited JSON records (t, kind, veh, lane, speed)."""
    with open(path, "w") as f:
        for t, kind, veh, lane, speed in events:
            f.write(json.dumps({"t": t, "kind": kind, "veh": veh,
                                "lane": lane, "speed": speed}))
            f.write("\n")


def write_traces(traces, path: str) -> None:
    with open(path, "w") as f:
        for trace in traces:
            f.write(trace.to_json())
            f.write("\n")
