"""Meta-controlled episode loop: route each decision tick to the fast learned
policy or, on critical conditions, to the deliberative agent chain
(phase analysis -> signal planning -> rule verification), with a bounded
number of verification attempts and a guaranteed fall-back to the learned
policy's action.

Every tick leaves a DecisionTrace: which mode ran, what the planner proposed,
every verification attempt with its outcome, and the action finally executed.
Agent failures never abort an episode; they degrade to the fail-safe route.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .backends import (BackendError, FilledPrompt, JsonExtractError,
                       extract_action, load_templates)
from .controllers import Controller
from .episode import Episode
from .scene import aggregate_phases, describe_scene, observe_approach

N_CHECK_DEFAULT = 3

DEFAULT_OBJECTIVES = (
    "1. Release emergency vehicles (police cars, ambulances, fire trucks) as "
    "fast as possible.\n"
    "2. Minimize overall delay: prefer phases with long queues.\n"
    "3. Balance directional load over time."
)


class ControlMode(str, Enum):
    RL = "RL"
    DELIBERATIVE = "DELIBERATIVE"


@dataclass
class VerificationAttempt:
    index: int
    proposed: int | None
    feasible: bool
    reason: str

    def as_dict(self) -> dict:
        return {"index": self.index, "proposed": self.proposed,
                "feasible": self.feasible, "reason": self.reason}


@dataclass
class DecisionTrace:
    t: float
    mode: ControlMode
    scene_texts: list[str] = field(default_factory=list)
    candidate: int | None = None
    attempts: list[VerificationAttempt] = field(default_factory=list)
    final_action: int = 0
    rl_action: int = 0
    fallback: bool = False
    rationale: str = ""
    note: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "t": self.t,
            "mode": self.mode.value,
            "scene_texts": self.scene_texts,
            "candidate": self.candidate,
            "attempts": [a.as_dict() for a in self.attempts],
            "final_action": self.final_action,
            "rl_action": self.rl_action,
            "fallback": self.fallback,
            "rationale": self.rationale,
            "note": self.note,
        })

    @staticmethod
    def from_json(line: str) -> "DecisionTrace":
        d = json.loads(line)
        return DecisionTrace(
            t=d["t"],
            mode=ControlMode(d["mode"]),
            scene_texts=list(d["scene_texts"]),
            candidate=d["candidate"],
            attempts=[VerificationAttempt(**a) for a in d["attempts"]],
            final_action=d["final_action"],
            rl_action=d["rl_action"],
            fallback=d["fallback"],
            rationale=d["rationale"],
            note=d["note"],
        )


def select_mode(descriptions, backend, templates=None) -> tuple[ControlMode, str]:
    """Route the tick. Backend trouble defaults to the fast branch."""
    if not descriptions:
        raise ValueError("need at least one scene description")
    templates = templates or load_templates()
    facts = {"directions": [d.facts.as_dict() for d in descriptions]}
    prompt = templates["mode_selector"].fill(
        direction_texts="\n\n".join(d.text for d in descriptions),
        facts_json=json.dumps(facts, indent=1),
    )
    try:
        reply = backend.complete(prompt)
    except BackendError as e:
        return ControlMode.RL, f"backend failure, defaulting to RL: {e}"
    token = reply.strip().upper()
    if "DELIBERATIVE" in token:
        return ControlMode.DELIBERATIVE, ""
    if "RL" in token:
        return ControlMode.RL, ""
    return ControlMode.RL, f"unparsable mode reply {reply!r}, defaulting to RL"


def plan_signal(phase_descriptions, objectives, backend, templates=None
                ) -> tuple[int | None, str, str]:
    """Ask the planning agent for a phase. Returns (action or None on a failed
    proposal, rationale, note)."""
    if not phase_descriptions:
        raise ValueError("need at least one phase description")
    templates = templates or load_templates()
    facts = {"phases": [p.as_dict() for p in phase_descriptions]}
    prompt = templates["plan"].fill(
        objectives=objectives,
        phase_texts="\n\n".join(p.text for p in phase_descriptions),
        facts_json=json.dumps(facts, indent=1),
    )
    return _run_plan_prompt(backend, prompt)


def _run_plan_prompt(backend, prompt: FilledPrompt) -> tuple[int | None, str, str]:
    try:
        reply = backend.complete(prompt)
    except BackendError as e:
        return None, "", f"plan backend failure: {e}"
    try:
        action = extract_action(reply)
    except JsonExtractError as e:
        return None, "", f"unparsable plan reply: {e}"
    rationale = ""
    try:
        obj = json.loads(reply[reply.find("{"):reply.rfind("}") + 1])
        rationale = str(obj.get("rationale", ""))
    except (ValueError, TypeError):
        pass
    return action, rationale, ""


def verify_action(candidate: int | None, allowed: frozenset[int], backend,
                  n_check: int, current_phase: int, templates=None
                  ) -> tuple[int | None, list[VerificationAttempt]]:
    """Up to n_check attempts: the planner's proposal first, then alternatives
    from the verification agent. Returns (accepted action or None, attempts)."""
    if not allowed:
        raise ValueError("feasible set must not be empty")
    templates = templates or load_templates()
    attempts: list[VerificationAttempt] = []
    proposal = candidate
    for i in range(1, n_check + 1):
        if proposal is not None and proposal in allowed:
            attempts.append(VerificationAttempt(i, proposal, True, "accepted"))
            return proposal, attempts
        reason = ("no proposal" if proposal is None
                  else f"phase {proposal} not in feasible set {sorted(allowed)}")
        attempts.append(VerificationAttempt(i, proposal, False, reason))
        if i == n_check:
            break
        facts = {"proposed": proposal, "feasible": sorted(allowed),
                 "current": current_phase}
        prompt = templates["check"].fill(facts_json=json.dumps(facts))
        try:
            proposal = extract_action(backend.complete(prompt))
        except (BackendError, JsonExtractError):
            proposal = None
    return None, attempts


class MetaController(Controller):
    """Dual-branch controller: fast learned policy for routine ticks, the
    deliberative agent chain for critical ones (Plan -> Check -> fallback)."""

    name = "meta"

    def __init__(self, agent, backend, n_check: int = N_CHECK_DEFAULT,
                 ablate_phase: bool = False, ablate_check: bool = False,
                 objectives: str = DEFAULT_OBJECTIVES):
        self.agent = agent
        self.backend = backend
        self.n_check = n_check
        self.ablate_phase = ablate_phase
        self.ablate_check = ablate_check
        self.objectives = objectives
        self.templates = load_templates()
        self.traces: list[DecisionTrace] = []

    def decide(self, ep: Episode) -> int:
        allowed = ep.feasible()
        # The learned policy's action is always computed: it is the mandated
        # fallback and makes mode comparisons auditable.
        rl_action, _, _ = self.agent.act(
            ep.state_tensor().astype("float32"), ep.feasible_mask(), sample=False)

        observations = [observe_approach(ep.world, ap.name)
                        for ap in ep.topology.approaches]
        descriptions = [self._describe(obs) for obs in observations]
        trace = DecisionTrace(
            t=ep.clock, mode=ControlMode.RL,
            scene_texts=[d.text for d in descriptions],
            rl_action=rl_action,
        )

        mode, note = select_mode(descriptions, self.backend, self.templates)
        trace.mode = mode
        trace.note = note
        if mode is ControlMode.RL:
            trace.final_action = rl_action
            self.traces.append(trace)
            return rl_action

        candidate, rationale, plan_note = self._plan(descriptions, ep)
        trace.candidate = candidate
        trace.rationale = rationale
        if plan_note:
            trace.note = (trace.note + "; " + plan_note).strip("; ")

        if self.ablate_check:
            if candidate is not None and candidate in allowed:
                trace.attempts = [VerificationAttempt(1, candidate, True,
                                                      "accepted unverified")]
                trace.final_action = candidate
            else:
                trace.attempts = [VerificationAttempt(
                    1, candidate, False, "unverified proposal infeasible")]
                trace.fallback = True
                trace.final_action = rl_action
            self.traces.append(trace)
            return trace.final_action

        accepted, attempts = verify_action(
            candidate, allowed, self.backend, self.n_check,
            ep.signal.current_phase, self.templates)
        trace.attempts = attempts
        if accepted is None:
            trace.fallback = True
            trace.final_action = rl_action
        else:
            trace.final_action = accepted
        self.traces.append(trace)
        return trace.final_action

    def _describe(self, obs):
        if self.backend.kind == "scripted":
            return describe_scene(obs)
        prompt = self.templates["scene"].fill(
            direction=obs.direction,
            facts_json=json.dumps(obs.as_dict(), indent=1),
        )
        try:
            text = self.backend.complete(prompt)
        except BackendError:
            return describe_scene(obs)  # deterministic stand-in
        desc = describe_scene(obs)
        return type(desc)(direction=obs.direction, text=text, facts=obs)

    def _plan(self, descriptions, ep: Episode):
        if self.ablate_phase:
            facts = {
                "directions": [d.facts.as_dict() for d in descriptions],
                "n_phases": ep.topology.n_phases,
                "current_phase": ep.signal.current_phase,
            }
            prompt = self.templates["plan"].fill(
                objectives=self.objectives,
                phase_texts="\n\n".join(d.text for d in descriptions),
                facts_json=json.dumps(facts, indent=1),
            )
            return _run_plan_prompt(self.backend, prompt)
        phase_descs = aggregate_phases(descriptions, ep.topology)
        if self.backend.kind == "http":
            # the phase agent's free-form summaries replace the template text
            facts = {"phases": [p.as_dict() for p in phase_descs],
                     "phase_to_movements": {
                         str(k): list(v)
                         for k, v in ep.topology.phase_movement_map.items()}}
            prompt = self.templates["phase"].fill(
                direction_texts="\n\n".join(d.text for d in descriptions),
                facts_json=json.dumps(facts, indent=1),
            )
            try:
                reply = self.backend.complete(prompt)
                from .backends import extract_json
                summaries = {int(p["phase"]): str(p["summary"])
                             for p in extract_json(reply).get("phases", [])}
                phase_descs = [
                    type(p)(phase_id=p.phase_id,
                            text=summaries.get(p.phase_id, p.text),
                            movement_ids=p.movement_ids,
                            has_emergency=p.has_emergency,
                            lanes=p.lanes,
                            queue_total=p.queue_total,
                            emergencies=p.emergencies)
                    for p in phase_descs
                ]
            except (BackendError, JsonExtractError, KeyError, TypeError, ValueError):
                pass  # keep deterministic texts
        return plan_signal(phase_descs, self.objectives, self.backend, self.templates)


@dataclass
class EpisodeResult:
    records: list
    traces: list[DecisionTrace]
    events: list
    signal_history: list[tuple[int, float, float]]
    seed: int
    controller: str
    t_max: float
    delta_t: float
    warmup: float
    min_gap_violations: list = field(default_factory=list)
    executed_actions: list[tuple[float, int]] = field(default_factory=list)


def run_episode(topology, demand, controller: Controller, seed: int,
                t_max: float = 600.0, delta_t: float = 5.0,
                warmup: float = 60.0, record_events: bool = True,
                audit_gaps: bool = False,
                executed_feasibility_check: bool = True) -> EpisodeResult:
    """Drive one full episode under the given controller."""
    ep = Episode(topology, demand, seed=seed, t_max=t_max, delta_t=delta_t,
                 warmup=warmup, record_events=record_events,
                 audit_gaps=audit_gaps)
    if isinstance(controller, MetaController):
        controller.traces = []
    executed: list[tuple[float, int]] = []
    while not ep.done:
        action = controller.decide(ep)
        if executed_feasibility_check and action not in ep.feasible():
            raise RuntimeError(
                f"controller {controller.name} returned infeasible action {action}")
        executed.append((ep.clock, action))
        ep.advance(action)
    traces = list(controller.traces) if isinstance(controller, MetaController) else []
    return EpisodeResult(
        records=ep.vehicle_records(),
        traces=traces,
        events=ep.events(),
        signal_history=ep.signal_history(),
        seed=seed,
        controller=controller.name,
        t_max=t_max,
        delta_t=delta_t,
        warmup=warmup,
        min_gap_violations=list(ep.world.min_gap_violations),
        executed_actions=executed,
    )
