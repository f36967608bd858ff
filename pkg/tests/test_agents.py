import re

import pytest

from conftest import TRANSCRIPTS, manifest
from fake_llm import ScriptedLLM
from scenoforge.agents import (
    PLACEHOLDERS, TEMPLATE_NAMES, Attempt, ExhaustedAttempts, PromptTemplate, RagExample, RepairConfig, Verdict,
    count_report_vehicles, evaluate_scenario, generate_net, interpret, load_template, net_digest, net_prompt,
    parse_description, parse_net_response, parse_vehicles_response, parse_verdict, repair_loop, scenario_digest,
    vehicles_prompt,
)
from scenoforge.compiler import SceneType, classify_scene, compile as compile_plan, validate
from scenoforge.llm import Backend, BackendConfig, channel_path, decode_transcript
from scenoforge.net_model import DiagCode, Diagnostic, DiagnosticError
from scenoforge.routing import expand_trips
from scenoforge.scenario import Scenario

ENDPOINT = "http://llm.test.invalid/v1"


def recorded(set_name, channel, entry=0):
    data = channel_path(TRANSCRIPTS / set_name, channel).read_bytes()
    return decode_transcript(data)[entry][1]


def replay_backend(set_name):
    return Backend(BackendConfig(transcript_dir=TRANSCRIPTS / set_name))


GOOD_DESC = """Description:
A main road splits into two branches at a slight angle.

Reasoning:
The AV takes the left branch while two vehicles cut across.

```footer
scene_type: fork
lanes:
  Main Road: 2
vehicle_count: 3
```
"""


# ---------------------------------------------------------------- templates


@pytest.mark.parametrize("name", TEMPLATE_NAMES)
def test_shipped_templates_render_clean(name):
    t = load_template(name)
    assert t.placeholders <= set(PLACEHOLDERS)
    conv = t.render(**{p: f"<{p}-value>" for p in PLACEHOLDERS})
    for m in conv:
        assert not re.search(r"\{[A-Za-z_][A-Za-z0-9_]*\}", m.content)
    assert conv[0].role == "system" and conv[1].role == "user"


def test_template_rejects_unknown_placeholder_and_missing_value():
    with pytest.raises(ValueError):
        PromptTemplate("x", "sys {colour}", "user")
    t = PromptTemplate("x", "sys", "make {count} of {request}")
    with pytest.raises(KeyError):
        t.render(count="3")
    assert t.render(count="3", request="forks")[1].content == "make 3 of forks"


def test_template_parse_needs_both_sections():
    with pytest.raises(ValueError):
        PromptTemplate.parse("x", "[system]\nonly system\n")
    t = PromptTemplate.parse("x", "[system]\nS\n[user]\nU {request}\n")
    assert (t.system, t.user) == ("S", "U {request}")


def test_rag_example_lands_verbatim_in_prompt():
    ex = RagExample("an off-ramp", "<nodes>\n  <node id=\"a\" x=\"0\" y=\"0\"/>\n</nodes>",
                    "<edges>\n  <edge id=\"ramp\" from=\"a\" to=\"b\" numLanes=\"1\"/>\n</edges>")
    rendered = "\n".join(m.content for m in net_prompt("desc", [ex]))
    assert ex.edge_text in rendered and ex.node_text in rendered
    assert "an off-ramp" not in "\n".join(m.content for m in net_prompt("desc"))


# -------------------------------------------------------------- interpreter


def test_parse_description_good():
    d = parse_description(GOOD_DESC)
    assert d.scene_type is SceneType.fork and d.vehicle_count == 3
    assert d.lanes == {"Main Road": 2}
    assert "```footer" not in d.narrative


@pytest.mark.parametrize("broken,subject", [
    (GOOD_DESC.replace("Reasoning:", "Thoughts:"), "reasoning"),
    (GOOD_DESC.replace("Description:", "Summary:"), "description"),
    (GOOD_DESC.replace("vehicle_count: 3", "vehicle_count: 0"), "vehicle_count"),
    (GOOD_DESC.replace("scene_type: fork", "scene_type: roundabout"), "scene_type"),
    (GOOD_DESC.replace("Main Road: 2", "Main Road: two"), "lanes"),
    (GOOD_DESC.replace("```footer", "```notes"), "footer"),
])
def test_parse_description_errors(broken, subject):
    with pytest.raises(DiagnosticError) as ei:
        parse_description(broken)
    d = ei.value.diagnostics[0]
    assert d.code is DiagCode.FormatError and d.subject == subject


def test_interpret_fork_fixture():
    out = interpret(replay_backend("fork"), manifest("fork")["request"], 1)
    assert len(out) == 1 and out[0].scene_type is SceneType.fork


def test_interpret_k5_makes_five_calls():
    b = replay_backend("fork-5")
    out = interpret(b, manifest("fork-5")["request"], 5)
    assert len(out) == 5
    assert b.calls == {f"scenario_{i}/interpret": 1 for i in range(5)}


def test_interpret_errors_keyed_by_index():
    llm = ScriptedLLM({"interpret": [GOOD_DESC, GOOD_DESC.replace("Reasoning:", "Why:")]})
    b = Backend(BackendConfig(mode="http", endpoint=ENDPOINT), llm.transport())
    with pytest.raises(DiagnosticError) as ei:
        interpret(b, "forks", 2)
    assert [d.subject for d in ei.value.diagnostics] == ["description[1]"]
    with pytest.raises(ValueError):
        interpret(b, "forks", 0)


# ------------------------------------------------------------ net generator


def test_t_fixture_net_classifies_as_t():
    text = recorded("t_intersection", "scenario_0/net")
    assert classify_scene(compile_plan(parse_net_response(text))) is SceneType.t_intersection


def test_two_nodes_blocks_is_format_error():
    text = recorded("t_intersection", "scenario_0/net")
    nodes = re.search(r"```nodes\n.*?```\n", text, re.S).group(0)
    with pytest.raises(DiagnosticError) as ei:
        parse_net_response(text + "\n" + nodes)
    assert ei.value.diagnostics[0].code is DiagCode.FormatError
    assert ei.value.response.endswith(nodes)


def test_generate_net_replay_with_prompt_check():
    desc = interpret(replay_backend("t_intersection"), manifest("t_intersection")["request"], 1)[0]
    b = replay_backend("t_intersection")
    _, plan = generate_net(b, desc.text, channel="scenario_0/net")
    assert validate(plan) == []


# -------------------------------------------------------- vehicle generator

TRIPS = """```trips
<trips>
    <trip id="av" type="AV" from="a" to="b" depart="0"/>
    <trip id="bv1" type="BV" from="a" to="b" depart="1"/>
</trips>
```"""


def test_parse_vehicles_ok_and_count_mismatch():
    assert [t.vehicle_id for t in parse_vehicles_response(TRIPS, 2)] == ["av", "bv1"]
    assert len(parse_vehicles_response(TRIPS, None)) == 2
    with pytest.raises(DiagnosticError) as ei:
        parse_vehicles_response(TRIPS, 7)
    d = ei.value.diagnostics[0]
    assert d.code is DiagCode.CountMismatch and "7" in d.message and "2" in d.message


def test_zero_av_trips():
    with pytest.raises(DiagnosticError) as ei:
        parse_vehicles_response(TRIPS.replace('type="AV"', 'type="BV"'), 2)
    assert ei.value.diagnostics[0].subject == "AV"


def test_vehicles_prompt_needs_summary():
    with pytest.raises(ValueError):
        vehicles_prompt("d", "  ", 3)
    assert "as many as" in "\n".join(m.content for m in vehicles_prompt("d", "- edge e", None))


def test_fork_fixture_bvs_cross_the_av_route():
    text = recorded("fork", "scenario_0/net")
    net = compile_plan(parse_net_response(text))
    trips = parse_vehicles_response(recorded("fork", "scenario_0/vehicles"), None)
    routes, failures = expand_trips(net, trips)
    assert not failures
    av = next(r for r in routes if r.vehicle_kind == "AV")
    # every BV shares at least one edge with the AV, so they meet near the split
    for r in routes:
        if r is not av:
            assert set(r.edges) & set(av.edges)
    summary = net_digest(net)
    assert all(e.id in summary for e in net.edges)


# ---------------------------------------------------------------- evaluator


def test_verdict_fixtures():
    ok = parse_verdict(recorded("fork", "scenario_0/evaluate"))
    assert ok.passed
    bad = parse_verdict(recorded("evaluator-fail", "scenario_0/evaluate"))
    assert not bad.passed and bad.reasoning


def test_verdict_errors():
    with pytest.raises(DiagnosticError):
        parse_verdict("maybe")
    with pytest.raises(DiagnosticError):
        parse_verdict("```verdict\nunsure\n```")
    with pytest.raises(DiagnosticError):
        parse_verdict("```verdict\nFAIL\n```")
    with pytest.raises(ValueError):
        Verdict(False, " ")


def test_evaluate_over_http():
    llm = ScriptedLLM()
    v = evaluate_scenario(Backend(BackendConfig(mode="http", endpoint=ENDPOINT), llm.transport()), "digest", "intent")
    assert v.passed
    assert "digest" in llm.requests[0]["body"]["messages"][1]["content"]


def test_scenario_digest_bounded():
    net = compile_plan(parse_net_response(recorded("fork", "scenario_0/net")))
    trips = parse_vehicles_response(recorded("fork", "scenario_0/vehicles"), None)
    routes, _ = expand_trips(net, trips)
    av = next(r.vehicle_id for r in routes if r.vehicle_kind == "AV")
    sc = Scenario(net, tuple(routes), av)
    text = scenario_digest(sc, SceneType.fork)
    assert "scene type: fork" in text and av in text
    many = Scenario(net, tuple(routes) + tuple(
        type(routes[0])(f"bv_extra_{i}", routes[0].edges, 1.0) for i in range(200)), av)
    assert len(scenario_digest(many, "fork")) <= 2000


# -------------------------------------------------------------- repair loop


def scripted(outcomes):
    """A generate callback that replays (text, diagnostics) pairs and records feedback."""
    seen = []

    def generate(feedback):
        seen.append(feedback)
        text, diags = outcomes[len(seen) - 1]
        if diags == "raise":
            raise DiagnosticError([Diagnostic(DiagCode.FormatError, "unclosed fence", "nodes")], response=text)
        return text, diags
    return generate, seen


def test_repair_first_attempt_ok():
    gen, seen = scripted([("ok", [])])
    value, log = repair_loop(gen, lambda v: v)
    assert value == [] and len(log) == 1 and log[0].ok and seen == [None]


def test_repair_feedback_carries_every_subject():
    bad = [Diagnostic(DiagCode.UnknownNode, "edge 'e1' from-node 'n5' is not declared in the node file", "n5"),
           Diagnostic(DiagCode.DuplicateId, "edge id 'e2' is declared twice", "e2")]
    gen, seen = scripted([("bad", bad), ("oops", "raise"), ("good", [])])
    _, log = repair_loop(gen, lambda v: v)
    assert len(log) == 3 and [a.ok for a in log] == [False, False, True]
    assert "n5" in seen[1] and "e2" in seen[1]
    assert "nodes" in seen[2]
    assert log[1].response_digest != log[0].response_digest


def test_repair_exhausts():
    bad = [Diagnostic(DiagCode.TooShort, "edge 'x' is 1.00 m long", "x")]
    gen, seen = scripted([("a", bad)] * 5)
    with pytest.raises(ExhaustedAttempts) as ei:
        repair_loop(gen, lambda v: v, RepairConfig(3))
    assert len(ei.value.attempts) == 3 and len(seen) == 3


def test_repair_continues_existing_log():
    bad = [Diagnostic(DiagCode.TooShort, "edge 'x' is 1.00 m long", "x")]
    log = [Attempt(1, "abc", tuple(bad))]
    gen, seen = scripted([("a", bad)] * 5)
    with pytest.raises(ExhaustedAttempts):
        repair_loop(gen, lambda v: v, RepairConfig(3), log=log)
    assert len(seen) == 2 and len(log) == 3
    with pytest.raises(ValueError):
        RepairConfig(0)


def test_count_report_vehicles():
    text = (TRANSCRIPTS / "crash-report" / "crash_report.txt").read_text()
    assert count_report_vehicles(text) == 3
    assert count_report_vehicles("Vehicle 1 hit Vehicle #2, then vehicle 1 stopped") == 2
