"""Language-model backends for the deliberative control agents.

Two kinds share one interface: a deterministic scripted engine that parses the
JSON facts block embedded in every prompt and applies fixed per-role rules,
and an HTTP client speaking the de-facto standard chat-completions protocol
(temperature pinned to 0). All transport problems surface as BackendError;
the orchestrator turns them into failed attempts or the fail-safe RL route.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from importlib import resources

import requests

ROLES = ("scene", "mode_selector", "phase", "plan", "check")

DEFAULT_TIMEOUT = 30.0
DEFAULT_MAX_RETRIES = 2


class BackendError(Exception):
    """Timeout, transport failure, non-2xx response, or bad configuration."""


class JsonExtractError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    role: str
    text: str

    def fill(self, **values: str) -> "FilledPrompt":
        try:
            filled = self.text.format(**values)
        except (KeyError, IndexError) as e:
            raise ValueError(f"unfilled placeholder in {self.role} template: {e}") from e
        return FilledPrompt(role=self.role, text=filled)


@dataclass(frozen=True)
class FilledPrompt:
    role: str
    text: str


def load_templates() -> dict[str, PromptTemplate]:
    out = {}
    for role in ROLES:
        text = (resources.files("crosslight") / "templates"
                / f"{role}.txt").read_text(encoding="utf-8")
        out[role] = PromptTemplate(role=role, text=text)
    return out


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"              # scripted | http
    endpoint: str = ""
    model: str = ""
    api_key: str = ""
    timeout_s: float = DEFAULT_TIMEOUT
    temperature: float = 0.0
    max_retries: int = DEFAULT_MAX_RETRIES

    def __post_init__(self):
        if self.kind not in ("scripted", "http"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not (self.endpoint and self.model):
            raise ValueError("http backend needs endpoint and model")

    @staticmethod
    def from_env() -> "BackendConfig":
        return BackendConfig(
            kind="http",
            endpoint=os.environ.get("LLM_API_BASE", ""),
            model=os.environ.get("LLM_MODEL", ""),
            api_key=os.environ.get("LLM_API_KEY", ""),
        )


# -- output parsing -----------------------------------------------------------

def extract_json(text: str) -> dict:
    """First balanced, parseable top-level JSON object embedded in text.

    String literals and escapes are honoured, so braces inside rationale
    strings do not end the scan. Total: raises JsonExtractError, nothing else.
    """
    if not isinstance(text, str):
        text = str(text)
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escape = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start:i + 1]
                    try:
                        obj = json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    if isinstance(obj, dict):
                        return obj
                    break
        start = text.find("{", start + 1)
    raise JsonExtractError("no object found")


def extract_action(text: str) -> int:
    obj = extract_json(text)
    if "action" not in obj:
        raise JsonExtractError("missing 'action' field")
    action = obj["action"]
    if isinstance(action, bool) or not isinstance(action, int):
        raise JsonExtractError(f"ill-typed 'action': {action!r}")
    return action


# -- scripted engine ----------------------------------------------------------

def _facts_from_prompt(prompt: FilledPrompt) -> dict:
    try:
        return extract_json(prompt.text)
    except JsonExtractError as e:
        raise BackendError(f"scripted backend found no facts block: {e}") from e


def scripted_respond(role: str, facts: dict) -> str:
    """Deterministic per-role rules over structured facts."""
    if role == "scene":
        from .scene import describe_scene, SceneObservation, LaneRecord, EmergencyEntry
        lanes = tuple(
            LaneRecord(
                lane_index=int(l["lane"]),
                movement_id=int(l["movement"]),
                turn=str(l["turn"]),
                vehicle_count=int(l["vehicles"]),
                queue_count=int(l["queued"]),
                occupancy=float(l["occupancy"]),
                congestion=str(l["congestion"]),
                emergencies=tuple(
                    EmergencyEntry(
                        vclass=str(e["class"]),
                        distance_to_stop=float(e["distance_to_stop_m"]),
                        speed=float(e["speed_mps"]),
                        wait_s=float(e["wait_s"]),
                        vehicle_id=int(e.get("vehicle_id", 0)),
                    ) for e in l.get("emergencies", [])
                ),
            ) for l in facts["lanes"]
        )
        obs = SceneObservation(direction=str(facts["direction"]), lanes=lanes)
        return describe_scene(obs).text

    if role == "mode_selector":
        for d in facts["directions"]:
            high = 0
            for lane in d["lanes"]:
                if lane.get("emergencies"):
                    return "DELIBERATIVE"
                if lane.get("congestion") == "high":
                    high += 1
            if high >= 2:
                return "DELIBERATIVE"
        return "RL"

    if role == "phase":
        phases = [{"phase": int(p["phase"]),
                   "summary": f"phase {int(p['phase'])}: queue {int(p['queue_total'])}, "
                              f"emergency {'yes' if p.get('has_emergency') else 'no'}"}
                  for p in facts["phases"]]
        return json.dumps({"phases": phases})

    if role == "plan":
        if "phases" in facts:
            return _scripted_plan_phases(facts)
        if "directions" in facts:
            return _scripted_plan_raw(facts)
        raise BackendError("plan facts carry neither phases nor directions")

    if role == "check":
        feasible = [int(a) for a in facts["feasible"]]
        proposed = facts.get("proposed")
        if isinstance(proposed, int) and proposed in feasible:
            return json.dumps({"action": proposed})
        current = facts.get("current")
        if isinstance(current, int) and current in feasible:
            return json.dumps({"action": current})
        return json.dumps({"action": min(feasible)})

    raise BackendError(f"unknown scripted role {role!r}")


def _scripted_plan_phases(facts: dict) -> str:
    phases = facts["phases"]
    candidates = []
    for p in phases:
        for e in p.get("emergencies", []):
            candidates.append((
                float(e["distance_to_stop_m"]),
                -float(e.get("wait_s", 0.0)),
                int(p["phase"]),
                str(e["class"]),
            ))
    if candidates:
        dist, neg_wait, phase, vclass = min(candidates)
        rationale = (f"A {vclass.replace('_', ' ')} is {dist:.0f} m from the stop line "
                     f"and has waited {-neg_wait:.0f} s; phase {phase} releases it first.")
        return json.dumps({"action": phase, "rationale": rationale})
    best = max(phases, key=lambda p: (int(p["queue_total"]), -int(p["phase"])))
    phase = int(best["phase"])
    rationale = (f"No emergency vehicles present; phase {phase} carries the largest "
                 f"total queue ({int(best['queue_total'])} stopped vehicles).")
    return json.dumps({"action": phase, "rationale": rationale})


def _scripted_plan_raw(facts: dict) -> str:
    # Without the phase-level grounding there is no reliable way to map an
    # emergency to the phase that releases it; cycle phases instead.
    n_phases = int(facts["n_phases"])
    current = int(facts["current_phase"])
    action = current % n_phases + 1
    rationale = ("Directional summaries could not be grounded to signal phases; "
                 f"cycling to phase {action}.")
    return json.dumps({"action": action, "rationale": rationale})


# -- backends -----------------------------------------------------------------

class ScriptedBackend:
    """Pure function of the prompt: extracts the facts block, applies the
    role rule, renders the role's output schema."""

    kind = "scripted"

    def __init__(self, config: BackendConfig | None = None):
        self.config = config or BackendConfig(kind="scripted")

    def complete(self, prompt: FilledPrompt) -> str:
        if not prompt.text:
            raise BackendError("empty prompt")
        return scripted_respond(prompt.role, _facts_from_prompt(prompt))


class HttpBackend:
    """Single-round-trip chat-completions client, temperature 0."""

    kind = "http"

    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        if config.kind != "http":
            raise ValueError("HttpBackend needs an http config")
        self.config = config
        self.session = session or requests.Session()

    def complete(self, prompt: FilledPrompt) -> str:
        if not prompt.text:
            raise BackendError("empty prompt")
        url = self.config.endpoint.rstrip("/") + "/v1/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": self.config.temperature,
        }
        last_exc: Exception | None = None
        for _ in range(max(1, self.config.max_retries)):
            try:
                resp = self.session.post(url, json=body, headers=headers,
                                         timeout=self.config.timeout_s)
            except requests.Timeout as e:
                raise BackendError(f"timeout after {self.config.timeout_s}s") from e
            except requests.RequestException as e:
                last_exc = e
                continue
            if resp.status_code != 200:
                raise BackendError(f"backend returned HTTP {resp.status_code}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as e:
                raise BackendError(f"malformed completion response: {e}") from e
        raise BackendError(f"transport failure: {last_exc}")


def make_backend(config: BackendConfig):
    if config.kind == "scripted":
        return ScriptedBackend(config)
    return HttpBackend(config)


def complete(config: BackendConfig, prompt: FilledPrompt) -> str:
    """One completion round trip against whichever backend the config names."""
    return make_backend(config).complete(prompt)
