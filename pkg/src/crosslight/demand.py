"""Traffic demand: per-approach arrival rates, turning shares, and the
pre-scheduled emergency vehicle injections.

Regular arrivals are Poisson per approach and simulation step; desired speeds
are drawn from a truncated normal (mean 10 m/s, variance 3, clipped to
[3, 13.9]). Emergency vehicles are scheduled up front: their spawn times are
uniform over the measured part of the horizon under a sub-seed derived from
the episode seed, so the same seed always produces the same incidents.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import V_MAX, EMERGENCY_CLASSES, Vehicle, footprint_for
from .topology import IntersectionTopology

SPEED_MEAN = 10.0
SPEED_STD = math.sqrt(3.0)   # the distribution is specified by its variance
SPEED_MIN = 3.0
BASE_HORIZON = 1800.0        # the demand table counts emergencies per 30 min


class DemandError(ValueError):
    pass


@dataclass(frozen=True)
class ApproachDemand:
    approach: str
    rate_mean: float                     # vehicles/s
    rate_std: float = 0.0
    emergency_count_per_30min: int = 0
    turning: dict[int, float] = field(default_factory=dict)  # movement id -> share


@dataclass(frozen=True)
class DemandProfile:
    name: str
    approaches: tuple[ApproachDemand, ...]

    def for_approach(self, name: str) -> ApproachDemand:
        for a in self.approaches:
            if a.approach == name:
                return a
        raise DemandError(f"no demand for approach {name!r}")

    def emergency_count(self, approach: str, horizon: float) -> int:
        base = self.for_approach(approach).emergency_count_per_30min
        return int(round(base * horizon / BASE_HORIZON))


def validate_demand(profile: DemandProfile, topology: IntersectionTopology) -> DemandProfile:
    names = {a.name for a in topology.approaches}
    for ad in profile.approaches:
        if ad.approach not in names:
            raise DemandError(f"demand references unknown approach {ad.approach!r}")
        if ad.rate_mean < 0 or ad.rate_std < 0:
            raise DemandError(f"approach {ad.approach}: negative rate")
        if ad.emergency_count_per_30min < 0:
            raise DemandError(f"approach {ad.approach}: negative emergency count")
        moves = {m.id for m in topology.movements_from(ad.approach)}
        if set(ad.turning) - moves:
            raise DemandError(f"approach {ad.approach}: turning shares for foreign movements")
        if ad.rate_mean > 0 or ad.emergency_count_per_30min > 0:
            total = math.fsum(ad.turning.values())
            if abs(total - 1.0) > 1e-9:
                raise DemandError(f"approach {ad.approach}: turning shares sum to {total}")
    return profile


def load_demand(config_text: str) -> DemandProfile:
    try:
        raw = json.loads(config_text)
    except json.JSONDecodeError as e:
        raise DemandError(f"demand config does not parse: {e}") from e
    try:
        approaches = tuple(
            ApproachDemand(
                approach=str(a["approach"]),
                rate_mean=float(a["rate_mean"]),
                rate_std=float(a.get("rate_std", 0.0)),
                emergency_count_per_30min=int(a.get("emergency_count_per_30min", 0)),
                turning={int(k): float(v) for k, v in a.get("turning", {}).items()},
            )
            for a in raw["approaches"]
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DemandError(f"malformed demand config: {e}") from e
    return DemandProfile(name=str(raw.get("name", "demand")), approaches=approaches)


def draw_desired_speed(rng: np.random.Generator) -> float:
    for _ in range(64):
        v = rng.normal(SPEED_MEAN, SPEED_STD)
        if SPEED_MIN <= v <= V_MAX:
            return float(v)
    return float(min(max(SPEED_MEAN, SPEED_MIN), V_MAX))


def schedule_emergencies(profile: DemandProfile, topology: IntersectionTopology,
                         horizon: float, seed: int, start: float = 0.0
                         ) -> list[tuple[float, str, int, str]]:
    """Fixed pre-drawn (time, approach, movement, class) list, sorted by time."""
    out: list[tuple[float, str, int, str]] = []
    for idx, ad in enumerate(profile.approaches):
        count = profile.emergency_count(ad.approach, horizon - start)
        if count == 0:
            continue
        sub = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence((seed, idx, 0xE)).generate_state(4)))
        times = sorted(float(t) for t in sub.uniform(start, horizon, size=count))
        moves = sorted(ad.turning)
        shares = np.array([ad.turning[m] for m in moves])
        for t in times:
            m = moves[int(sub.choice(len(moves), p=shares / shares.sum()))]
            vclass = EMERGENCY_CLASSES[int(sub.integers(0, len(EMERGENCY_CLASSES)))]
            out.append((t, ad.approach, m, vclass))
    out.sort()
    return out


class ArrivalProcess:
    """Per-episode arrival generator with deterministic lane assignment."""

    def __init__(self, profile: DemandProfile, topology: IntersectionTopology,
                 rng: np.random.Generator, horizon: float,
                 emergency_seed: int | None = None, emergency_start: float = 0.0):
        self.profile = profile
        self.topology = topology
        self.rng = rng
        self._next_id = 1
        self._lane_cursor: dict[int, int] = {m.id: 0 for m in topology.movements}
        self._per_approach: list[tuple[ApproachDemand, list[int], np.ndarray]] = []
        for ad in profile.approaches:
            moves = sorted(ad.turning)
            shares = np.array([ad.turning[m] for m in moves], dtype=float)
            if shares.size and shares.sum() > 0:
                shares = shares / shares.sum()
            self._per_approach.append((ad, moves, shares))
        self.schedule: list[tuple[float, str, int, str]] = []
        if emergency_seed is not None:
            self.schedule = schedule_emergencies(
                profile, topology, horizon, emergency_seed, start=emergency_start)
        self._schedule_idx = 0

    def _pick_lane(self, movement_id) -> str:
        m = self.topology.movement(movement_id)
        cur = self._lane_cursor[m.id]
        self._lane_cursor[m.id] = (cur + 1) % len(m.from_lanes)
        return f"{m.from_approach}.in.{m.from_lanes[cur]}"

    def _new_vehicle(self, vclass: str, movement: int, clock: float) -> Vehicle:
        veh = Vehicle(
            id=self._next_id,
            vclass=vclass,
            desired_speed=draw_desired_speed(self.rng),
            movement=movement,
            entry_time=clock,
            footprint=footprint_for(vclass),
        )
        self._next_id += 1
        return veh

    def sample(self, dt: float, clock: float) -> list[tuple[Vehicle, str]]:
        """Arrivals for the step (clock, clock+dt]: Poisson regulars plus any
        scheduled emergencies whose time falls inside the step."""
        if dt <= 0:
            raise ValueError("dt must be > 0")
        out: list[tuple[Vehicle, str]] = []
        t_end = clock + dt
        while (self._schedule_idx < len(self.schedule)
               and self.schedule[self._schedule_idx][0] <= t_end):
            _, _, movement, vclass = self.schedule[self._schedule_idx]
            self._schedule_idx += 1
            veh = self._new_vehicle(vclass, movement, clock)
            out.append((veh, self._pick_lane(movement)))
        for ad, moves, shares in self._per_approach:
            if ad.rate_mean <= 0 or not moves:
                continue
            n = int(self.rng.poisson(ad.rate_mean * dt))
            for _ in range(n):
                movement = moves[int(self.rng.choice(len(moves), p=shares))]
                veh = self._new_vehicle("regular", movement, clock)
                out.append((veh, self._pick_lane(movement)))
        return out


def spawn_arrivals(profile: DemandProfile, rng: np.random.Generator,
                   dt: float, clock: float, topology: IntersectionTopology,
                   process: ArrivalProcess | None = None) -> list[Vehicle]:
    """One-step arrival draw. A persistent ArrivalProcess carries the lane
    cursors and emergency schedule between calls; without one, a throwaway
    process (no emergencies) is used."""
    proc = process or ArrivalProcess(profile, topology, rng, horizon=clock + dt)
    return [veh for veh, _lane in proc.sample(dt, clock)]
