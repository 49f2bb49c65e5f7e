"""Travel-time and waiting-time metrics over per-vehicle records.

Per seed: mean travel time and mean accumulated waiting time over completed
vehicles, the same pair restricted to emergency classes, and within-seed
spreads. A population with no completed member leaves its metric absent
(None), never zero. Across seeds: mean and sample std of the per-seed means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dynamics import EMERGENCY_CLASSES, Vehicle


@dataclass(frozen=True)
class VehicleRecord:
    id: int
    vclass: str
    entry_time: float
    exit_time: float | None
    accumulated_wait: float

    @property
    def completed(self) -> bool:
        return self.exit_time is not None

    @property
    def travel_time(self) -> float | None:
        if self.exit_time is None:
            return None
        return self.exit_time - self.entry_time

    @property
    def is_emergency(self) -> bool:
        return self.vclass in EMERGENCY_CLASSES

    @staticmethod
    def from_vehicle(veh: Vehicle) -> "VehicleRecord":
        return VehicleRecord(
            id=veh.id,
            vclass=veh.vclass,
            entry_time=veh.entry_time,
            exit_time=veh.exit_time,
            accumulated_wait=veh.accumulated_wait,
        )


def _mean(xs: list[float]) -> float:
    return math.fsum(xs) / len(xs)


def _std(xs: list[float], ddof: int = 1) -> float:
    if len(xs) <= ddof:
        return 0.0
    mu = _mean(xs)
    return math.sqrt(math.fsum((x - mu) ** 2 for x in xs) / (len(xs) - ddof))


@dataclass(frozen=True)
class SeedMetrics:
    att: float | None
    awt: float | None
    aett: float | None
    aewt: float | None
    att_spread: float = 0.0       # within-seed std over vehicles
    awt_spread: float = 0.0
    n_completed: int = 0
    n_incomplete: int = 0
    n_emergency_completed: int = 0
    n_emergency_incomplete: int = 0
    degenerate_spread: bool = False  # set when a population has one member


def compute_metrics(records: list[VehicleRecord]) -> SeedMetrics:
    completed = [r for r in records if r.completed]
    incomplete = [r for r in records if not r.completed]
    emergency = [r for r in completed if r.is_emergency]
    att = awt = aett = aewt = None
    att_spread = awt_spread = 0.0
    degenerate = False
    if completed:
        travels = [r.travel_time for r in completed]
        waits = [r.accumulated_wait for r in completed]
        att = _mean(travels)
        awt = _mean(waits)
        att_spread = _std(travels)
        awt_spread = _std(waits)
        degenerate = len(completed) == 1
    if emergency:
        aett = _mean([r.travel_time for r in emergency])
        aewt = _mean([r.accumulated_wait for r in emergency])
        degenerate = degenerate or len(emergency) == 1
    return SeedMetrics(
        att=att, awt=awt, aett=aett, aewt=aewt,
        att_spread=att_spread, awt_spread=awt_spread,
        n_completed=len(completed),
        n_incomplete=len(incomplete),
        n_emergency_completed=len(emergency),
        n_emergency_incomplete=sum(1 for r in incomplete if r.is_emergency),
        degenerate_spread=degenerate,
    )


@dataclass(frozen=True)
class MetricsReport:
    scenario: str
    controller: str
    seeds: tuple[int, ...]
    per_seed: tuple[SeedMetrics, ...]
    att: float | None = None
    att_std: float | None = None
    awt: float | None = None
    awt_std: float | None = None
    aett: float | None = None
    aett_std: float | None = None
    aewt: float | None = None
    aewt_std: float | None = None
    incomplete_count: int = 0
    completed_count: int = 0
    per_seed_values: dict[str, list[float | None]] = field(default_factory=dict)


def aggregate(scenario: str, controller: str, seeds: list[int],
              per_seed: list[SeedMetrics]) -> MetricsReport:
    def agg(name: str) -> tuple[float | None, float | None]:
        vals = [getattr(m, name) for m in per_seed if getattr(m, name) is not None]
        if not vals:
            return None, None
        return _mean(vals), _std(vals)

    att, att_std = agg("att")
    awt, awt_std = agg("awt")
    aett, aett_std = agg("aett")
    aewt, aewt_std = agg("aewt")
    return MetricsReport(
        scenario=scenario,
        controller=controller,
        seeds=tuple(seeds),
        per_seed=tuple(per_seed),
        att=att, att_std=att_std,
        awt=awt, awt_std=awt_std,
        aett=aett, aett_std=aett_std,
        aewt=aewt, aewt_std=aewt_std,
        incomplete_count=sum(m.n_incomplete for m in per_seed),
        completed_count=sum(m.n_completed for m in per_seed),
        per_seed_values={
            name: [getattr(m, name) for m in per_seed]
            for name in ("att", "awt", "aett", "aewt")
        },
    )
