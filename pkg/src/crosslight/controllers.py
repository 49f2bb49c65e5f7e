"""Baseline signal controllers: fixed-time, adaptive cycle timing, and
pressure-greedy phase selection.

Every controller returns an action from the currently feasible set; a desired
switch that the minimum green still blocks is retried on the next decision
tick. Timing plans anchor to the absolute clock, so a late switch does not
drift the schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dynamics import WorldState
from .episode import Episode
from .signals import MIN_GREEN, SignalState, feasible_actions
from .topology import IntersectionTopology

FIXTIME_GREEN = 30.0
SATURATION_FLOW = 0.5        # veh/s per lane
FORMULA_LOST_PER_PHASE = 5.0  # s per phase in the cycle-length formula
YELLOW_LOST_PER_PHASE = 3.0   # s per phase the schedule actually spends yellow
CYCLE_MAX = 120.0
SATURATION_Y = 0.95
WEBSTER_WINDOW = 300.0
WEBSTER_REPLAN = 300.0


class Controller:
    name = "controller"

    def decide(self, ep: Episode) -> int:
        raise NotImplementedError


# -- fixed time ----------------------------------------------------------------

def fixtime_decide(clock: float, n_phases: int) -> int:
    return int(clock // FIXTIME_GREEN) % n_phases + 1


class FixTimeController(Controller):
    name = "fixtime"

    def decide(self, ep: Episode) -> int:
        desired = fixtime_decide(ep.clock, ep.topology.n_phases)
        allowed = ep.feasible()
        if desired in allowed:
            return desired
        if ep.signal.current_phase in allowed:
            return ep.signal.current_phase
        return min(allowed)


# -- Webster -------------------------------------------------------------------

@dataclass(frozen=True)
class WebsterPlan:
    cycle: float
    greens: tuple[float, ...]
    computed_at: float
    lost_time: float          # schedule lost time: total yellow per cycle
    critical_sum: float

    def phase_at(self, clock: float) -> int:
        pos = clock % self.cycle
        t = 0.0
        for i, g in enumerate(self.greens):
            t += g + YELLOW_LOST_PER_PHASE
            if pos < t:
                return i + 1
        return len(self.greens)


def webster_cycle(critical_sum: float, lost_time: float) -> float:
    """Cycle length from the critical-ratio sum; lost_time is the formula's
    5 s/phase figure, so the minimum cycle is 13 s per phase."""
    if critical_sum >= SATURATION_Y:
        return CYCLE_MAX
    raw = (1.5 * lost_time + 5.0) / (1.0 - critical_sum)
    c_min = 13.0 * lost_time / FORMULA_LOST_PER_PHASE
    return min(max(raw, c_min), CYCLE_MAX)


def webster_plan(flows: dict[int, float], topology: IntersectionTopology,
                 clock: float = 0.0) -> WebsterPlan:
    """Build a timing plan from per-movement flows over the rolling window.

    Critical ratio per phase: max over member movements of
    flow / (saturation flow * lanes). Greens split the non-yellow part of the
    cycle in proportion, floored at the 10 s minimum green.
    """
    n = topology.n_phases
    ys = []
    for phase in topology.phases:
        y = 0.0
        for mid in phase.movements:
            m = topology.movement(mid)
            y = max(y, flows.get(mid, 0.0) / (SATURATION_FLOW * m.lane_count))
        ys.append(y)
    total_y = math.fsum(ys)
    cycle = webster_cycle(total_y, FORMULA_LOST_PER_PHASE * n)
    budget = cycle - YELLOW_LOST_PER_PHASE * n
    if total_y <= 0.0:
        greens = [budget / n] * n
    else:
        greens = [0.0] * n
        floored = [False] * n
        while True:
            free = [i for i in range(n) if not floored[i]]
            y_free = math.fsum(ys[i] for i in free)
            remaining = budget - MIN_GREEN * (n - len(free))
            changed = False
            for i in free:
                share = remaining / len(free) if y_free <= 0 else remaining * ys[i] / y_free
                if share < MIN_GREEN:
                    floored[i] = True
                    greens[i] = MIN_GREEN
                    changed = True
            if not changed:
                for i in free:
                    greens[i] = (remaining / len(free) if y_free <= 0
                                 else remaining * ys[i] / y_free)
                break
            if not free:
                break
    return WebsterPlan(
        cycle=cycle,
        greens=tuple(greens),
        computed_at=clock,
        lost_time=YELLOW_LOST_PER_PHASE * n,
        critical_sum=total_y,
    )


def _neutral_plan(n_phases: int) -> WebsterPlan:
    """Pre-data fallback: equal splits at the maximum cycle (the same timing a
    fixed 30 s plan produces on four phases)."""
    green = (CYCLE_MAX - YELLOW_LOST_PER_PHASE * n_phases) / n_phases
    return WebsterPlan(cycle=CYCLE_MAX, greens=(green,) * n_phases,
                       computed_at=0.0, lost_time=YELLOW_LOST_PER_PHASE * n_phases,
                       critical_sum=SATURATION_Y)


class WebsterController(Controller):
    name = "webster"

    # Flow windows never include the cold start (arrivals still traversing an
    # empty network make early-served phases look demand-free); replans run on
    # the 300 s cadence, so the first informed plan lands at t=300.
    MEASURE_FROM = 60.0

    def __init__(self):
        self.plan: WebsterPlan | None = None
        self._next_replan = WEBSTER_REPLAN

    def decide(self, ep: Episode) -> int:
        if self.plan is None:
            self.plan = _neutral_plan(ep.topology.n_phases)
        if ep.clock >= self._next_replan:
            since = max(self.MEASURE_FROM, ep.clock - WEBSTER_WINDOW)
            flows = {m.id: ep.world.movement_stats(m.id, since)[0]
                     for m in ep.topology.movements}
            self.plan = webster_plan(flows, ep.topology, clock=ep.clock)
            self._next_replan += WEBSTER_REPLAN
        desired = self.plan.phase_at(ep.clock)
        allowed = ep.feasible()
        if desired in allowed:
            return desired
        if ep.signal.current_phase in allowed:
            return ep.signal.current_phase
        return min(allowed)


# -- MaxPressure ----------------------------------------------------------------

def compute_pressure(world: WorldState, phase_id: int,
                     topology: IntersectionTopology) -> float:
    """Upstream stopped count minus the mean stopped count over the
    destination approach's outgoing lanes, summed over the phase's movements."""
    queues = world.queue_lengths()
    pressure = 0.0
    for mid in topology.phase(phase_id).movements:
        m = topology.movement(mid)
        downstream = world.out_lane_queues(m.to_approach)
        mean_down = sum(downstream) / len(downstream) if downstream else 0.0
        pressure += queues[mid] - mean_down
    return pressure


def maxpressure_decide(world: WorldState, signal: SignalState,
                       topology: IntersectionTopology) -> int:
    allowed = feasible_actions(signal, topology)
    if len(allowed) == 1:
        return next(iter(allowed))
    pressures = {p: compute_pressure(world, p, topology) for p in sorted(allowed)}
    best = max(pressures.values())
    winners = [p for p, v in pressures.items() if v == best]
    if signal.current_phase in winners:
        return signal.current_phase
    return min(winners)


class MaxPressureController(Controller):
    name = "maxpressure"

    def decide(self, ep: Episode) -> int:
        return maxpressure_decide(ep.world, ep.signal, ep.topology)


# -- learned policy --------------------------------------------------------------

class RLController(Controller):
    """Feasibility-masked greedy rollout of a trained (or fixed-seed) policy."""

    name = "rl"

    def __init__(self, agent):
        self.agent = agent

    def decide(self, ep: Episode) -> int:
        action, _, _ = self.agent.act(
            ep.state_tensor().astype("float32"), ep.feasible_mask(), sample=False)
        return action
