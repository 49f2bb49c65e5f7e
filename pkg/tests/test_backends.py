import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosslight.backends import (BackendConfig, BackendError, FilledPrompt,
                                 HttpBackend, JsonExtractError, ScriptedBackend,
                                 complete, extract_action, extract_json,
                                 load_templates, scripted_respond)
from crosslight.mock_server import MockChatServer


def test_templates_load_and_fill():
    templates = load_templates()
    assert set(templates) == {"scene", "mode_selector", "phase", "plan", "check"}
    filled = templates["check"].fill(facts_json='{"feasible": [1], "current": 1}')
    assert '{"feasible": [1]' in filled.text
    with pytest.raises(ValueError, match="unfilled placeholder"):
        templates["scene"].fill(direction="N")  # facts_json missing


def test_backend_config_validation():
    with pytest.raises(ValueError):
        BackendConfig(kind="http")  # endpoint/model missing
    with pytest.raises(ValueError):
        BackendConfig(kind="quantum")


# -- extract_json ----------------------------------------------------------------

def test_extract_embedded_object():
    assert extract_action('The best phase is {"action": 3} because...') == 3


def test_extract_no_object_is_typed_error():
    with pytest.raises(JsonExtractError, match="no object found"):
        extract_json("no json here")


def test_extract_handles_braces_inside_strings():
    text = 'prefix {"action": 2, "rationale": "queues {a: 1} look {bad}"} suffix'
    obj = extract_json(text)
    assert obj["action"] == 2
    assert "{a: 1}" in obj["rationale"]


def test_extract_skips_unparsable_candidates():
    text = "{not json} then {\"action\": 4}"
    assert extract_json(text) == {"action": 4}


def test_extract_action_field_errors():
    with pytest.raises(JsonExtractError, match="missing"):
        extract_action('{"phase": 1}')
    with pytest.raises(JsonExtractError, match="ill-typed"):
        extract_action('{"action": "two"}')
    with pytest.raises(JsonExtractError, match="ill-typed"):
        extract_action('{"action": true}')


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=400))
def test_extract_json_is_total(text):
    try:
        obj = extract_json(text)
        assert isinstance(obj, dict)
    except JsonExtractError:
        pass


# -- scripted rules ---------------------------------------------------------------

def test_scripted_mode_selector_emergency_triggers_deliberative():
    facts = {"directions": [
        {"direction": "N", "lanes": [
            {"lane": 1, "congestion": "low",
             "emergencies": [{"class": "ambulance", "distance_to_stop_m": 40.0,
                              "speed_mps": 8.0, "wait_s": 0.0}]}]}]}
    assert scripted_respond("mode_selector", facts) == "DELIBERATIVE"


def test_scripted_mode_selector_congestion_rule():
    lanes_high = [{"lane": i, "congestion": "high", "emergencies": []}
                  for i in (1, 2)]
    assert scripted_respond("mode_selector",
                            {"directions": [{"direction": "N", "lanes": lanes_high}]}) \
        == "DELIBERATIVE"
    one_high = [{"lane": 1, "congestion": "high", "emergencies": []},
                {"lane": 2, "congestion": "low", "emergencies": []}]
    assert scripted_respond("mode_selector",
                            {"directions": [{"direction": "N", "lanes": one_high}]}) \
        == "RL"


def test_scripted_check_passes_feasible_through():
    out = scripted_respond("check", {"proposed": 2, "feasible": [1, 2], "current": 1})
    assert json.loads(out) == {"action": 2}


def test_scripted_check_falls_back_to_current():
    out = scripted_respond("check", {"proposed": 9, "feasible": [1, 2], "current": 1})
    assert json.loads(out) == {"action": 1}
    out = scripted_respond("check", {"proposed": 9, "feasible": [2, 3], "current": 1})
    assert json.loads(out) == {"action": 2}


def test_scripted_plan_prioritizes_nearest_emergency():
    facts = {"phases": [
        {"phase": 1, "queue_total": 3, "emergencies": []},
        {"phase": 2, "queue_total": 0, "emergencies": [
            {"class": "ambulance", "distance_to_stop_m": 10.0, "wait_s": 5.0}]},
        {"phase": 3, "queue_total": 0, "emergencies": [
            {"class": "fire_truck", "distance_to_stop_m": 80.0, "wait_s": 30.0}]},
    ]}
    obj = json.loads(scripted_respond("plan", facts))
    assert obj["action"] == 2
    assert obj["rationale"]


def test_scripted_plan_tie_breaks_by_wait_then_phase():
    facts = {"phases": [
        {"phase": 1, "queue_total": 0, "emergencies": [
            {"class": "police", "distance_to_stop_m": 50.0, "wait_s": 2.0}]},
        {"phase": 2, "queue_total": 0, "emergencies": [
            {"class": "police", "distance_to_stop_m": 50.0, "wait_s": 9.0}]},
    ]}
    assert json.loads(scripted_respond("plan", facts))["action"] == 2


def test_scripted_plan_max_queue_without_emergencies():
    facts = {"phases": [
        {"phase": 1, "queue_total": 3, "emergencies": []},
        {"phase": 2, "queue_total": 9, "emergencies": []},
        {"phase": 3, "queue_total": 1, "emergencies": []},
        {"phase": 4, "queue_total": 0, "emergencies": []},
    ]}
    obj = json.loads(scripted_respond("plan", facts))
    assert obj["action"] == 2


def test_scripted_plan_raw_directions_cycles():
    facts = {"directions": [], "n_phases": 3, "current_phase": 3}
    assert json.loads(scripted_respond("plan", facts))["action"] == 1
    facts["current_phase"] = 1
    assert json.loads(scripted_respond("plan", facts))["action"] == 2


def test_scripted_scene_delegates_to_description():
    facts = {"direction": "N", "lanes": [
        {"lane": 1, "movement": 1, "turn": "straight", "vehicles": 2,
         "queued": 1, "occupancy": 0.12, "congestion": "low",
         "emergencies": [{"class": "fire_truck", "distance_to_stop_m": 25.0,
                          "speed_mps": 0.0, "wait_s": 12.0, "vehicle_id": 5}]}]}
    text = scripted_respond("scene", facts)
    assert "fire truck" in text
    assert "25" in text


def test_scripted_backend_is_pure():
    backend = ScriptedBackend()
    templates = load_templates()
    prompt = templates["plan"].fill(
        objectives="1. anything", phase_texts="...",
        facts_json=json.dumps({"phases": [{"phase": 1, "queue_total": 2,
                                           "emergencies": []}]}))
    assert backend.complete(prompt) == backend.complete(prompt)


def test_scripted_backend_requires_facts():
    backend = ScriptedBackend()
    with pytest.raises(BackendError):
        backend.complete(FilledPrompt(role="plan", text="no facts in sight"))
    with pytest.raises(BackendError):
        backend.complete(FilledPrompt(role="plan", text=""))


# -- http backend -----------------------------------------------------------------

def test_http_round_trip_carries_protocol_fields():
    with MockChatServer(responder=lambda body: '{"action": 1}') as server:
        config = BackendConfig(kind="http", endpoint=server.base_url,
                               model="test-model", api_key="sekrit", timeout_s=5.0)
        reply = complete(config, FilledPrompt(role="plan", text="pick a phase"))
        assert reply == '{"action": 1}'
        req = server.requests[0]
        assert req["path"] == "/v1/chat/completions"
        assert req["body"]["model"] == "test-model"
        assert req["body"]["temperature"] == 0
        assert req["body"]["messages"][0]["content"] == "pick a phase"
        assert req["headers"]["Authorization"] == "Bearer sekrit"


def test_http_timeout_surfaces_as_backend_error():
    with MockChatServer(responder=lambda body: "slow", delay_s=1.0) as server:
        config = BackendConfig(kind="http", endpoint=server.base_url,
                               model="m", timeout_s=0.2)
        backend = HttpBackend(config)
        with pytest.raises(BackendError, match="timeout"):
            backend.complete(FilledPrompt(role="plan", text="x"))


def test_http_non_2xx_surfaces():
    with MockChatServer() as server:
        config = BackendConfig(kind="http", endpoint=server.base_url + "/missing",
                               model="m", timeout_s=5.0)
        with pytest.raises(BackendError, match="HTTP"):
            HttpBackend(config).complete(FilledPrompt(role="plan", text="x"))


def test_http_retries_exactly_max_on_transport_failure():
    config = BackendConfig(kind="http", endpoint="http://127.0.0.1:1",
                           model="m", timeout_s=0.5, max_retries=3)
    backend = HttpBackend(config)
    calls = []
    original = backend.session.post

    def counting_post(*args, **kwargs):
        calls.append(1)
        return original(*args, **kwargs)

    backend.session.post = counting_post
    with pytest.raises(BackendError, match="transport"):
        backend.complete(FilledPrompt(role="plan", text="x"))
    assert len(calls) == 3


def test_mock_server_scripted_default_answers_roles():
    templates = load_templates()
    with MockChatServer() as server:
        config = BackendConfig(kind="http", endpoint=server.base_url,
                               model="m", timeout_s=5.0)
        backend = HttpBackend(config)
        prompt = templates["check"].fill(
            facts_json=json.dumps({"proposed": 7, "feasible": [2, 4], "current": 2}))
        assert json.loads(backend.complete(prompt)) == {"action": 2}
