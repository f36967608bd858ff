import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lane_offset_ok
from plan_factory import FAULT_KINDS, inject_faults, random_plan
from scenoforge.compiler import (
    CompileOptions, SceneType, classify_direction, classify_scene, compile as compile_plan,
    diagnostics_to_feedback, is_reverse, plan_from_network, validate,
)
from scenoforge.geometry import Point, signed_delta
from scenoforge.net_model import (
    DiagCode, Diagnostic, DiagnosticError, EdgeDecl, NetworkPlan, NodeDecl, parse_net, serialize_net,
)


def two_node(length=100.0, lanes=1) -> NetworkPlan:
    return NetworkPlan((NodeDecl("a", Point(0, 0)), NodeDecl("b", Point(length, 0))),
                       (EdgeDecl("e", "a", "b", lanes),))


def star(headings, lanes=2, two_way=True, length=100.0, speeds=None) -> NetworkPlan:
    nodes = [NodeDecl("c", Point(0, 0))]
    edges = []
    for k, h in enumerate(headings):
        p = Point(round(length * math.cos(math.radians(h)), 2), round(length * math.sin(math.radians(h)), 2))
        nodes.append(NodeDecl(f"x{k}", p))
        sp = speeds[k] if speeds else 13.89
        ln = lanes[k] if isinstance(lanes, (list, tuple)) else lanes
        edges.append(EdgeDecl(f"in{k}", f"x{k}", "c", ln, sp))
        if two_way:
            edges.append(EdgeDecl(f"out{k}", "c", f"x{k}", ln, sp))
    return NetworkPlan(tuple(nodes), tuple(edges))


def test_validate_dangling_node():
    plan = NetworkPlan((NodeDecl("a", Point(0, 0)),), (EdgeDecl("e1", "n5", "a"),))
    diags = validate(plan)
    assert [d.code for d in diags] == [DiagCode.UnknownNode]
    assert diags[0].subject == "n5" and "n5" in diags[0].message


def test_validate_ok_and_too_short():
    assert validate(two_node()) == []
    diags = validate(two_node(3.0))
    assert [d.code for d in diags] == [DiagCode.TooShort]
    assert validate(two_node(3.0), CompileOptions(min_edge_length=2.0)) == []


def test_compile_two_node():
    net = compile_plan(two_node())
    assert len(net.edges) == 1 and len(net.connections) == 0
    assert [j.kind for j in net.junctions] == ["dead_end", "dead_end"]
    assert all(j.shape == () for j in net.junctions)


def test_two_node_net_round_trip_exact():
    net = compile_plan(two_node())
    assert parse_net(serialize_net(net)) == net
    # 1.5 * 3.2 is not exactly 4.8 in binary, so only the text of wider edges survives unchanged
    text = serialize_net(compile_plan(two_node(lanes=2)))
    assert serialize_net(parse_net(text)) == text


def test_compile_raises_all_diagnostics():
    plan = NetworkPlan((NodeDecl("a", Point(0, 0)),), (EdgeDecl("e1", "a", "q"), EdgeDecl("e2", "a", "a", 0)))
    with pytest.raises(DiagnosticError) as ei:
        compile_plan(plan)
    assert len(ei.value.diagnostics) >= 3


def test_t_plan_connections_by_enumeration():
    plan = star([0, 180, 270])
    net = compile_plan(plan)
    at_c = [c for c in net.connections if net.edge(c.from_edge).to_junction == "c"]
    # brute force: every (incoming, outgoing) pair at c that is not a reverse pair, once per incoming lane
    expected = set()
    for i in net.incoming("c"):
        for o in net.outgoing("c"):
            if not is_reverse(i, o):
                for lane in range(i.num_lanes):
                    expected.add((i.id, o.id, lane, min(lane, o.num_lanes - 1)))
    assert len(at_c) == 12
    assert {(c.from_edge, c.to_edge, c.from_lane, c.to_lane) for c in at_c} == expected
    assert not any(is_reverse(net.edge(c.from_edge), net.edge(c.to_edge)) for c in net.connections)


def test_lane_mapping_narrowing():
    plan = NetworkPlan(
        (NodeDecl("a", Point(0, 0)), NodeDecl("b", Point(100, 0)), NodeDecl("c", Point(200, 0))),
        (EdgeDecl("e1", "a", "b", 3), EdgeDecl("e2", "b", "c", 1)),
    )
    net = compile_plan(plan)
    assert sorted((c.from_lane, c.to_lane) for c in net.connections) == [(0, 0), (1, 0), (2, 0)]
    assert {c.direction for c in net.connections} == {"s"}


def test_dead_end_two_way_has_no_uturn():
    plan = NetworkPlan((NodeDecl("a", Point(0, 0)), NodeDecl("b", Point(100, 0))),
                       (EdgeDecl("ab", "a", "b"), EdgeDecl("ba", "b", "a")))
    assert compile_plan(plan).connections == ()


def test_uturn_where_roads_meet_but_no_other_exit():
    # two roads end at b; only b->a leaves, so a->b may turn back
    plan = NetworkPlan(
        (NodeDecl("a", Point(0, 0)), NodeDecl("b", Point(100, 0)), NodeDecl("c", Point(100, 100))),
        (EdgeDecl("ab", "a", "b"), EdgeDecl("ba", "b", "a"), EdgeDecl("cb", "c", "b")),
    )
    net = compile_plan(plan)
    pairs = {(c.from_edge, c.to_edge, c.direction) for c in net.connections}
    assert ("ab", "ba", "t") in pairs
    assert ("cb", "ba", "r") in pairs


def test_parallel_lane_spacing():
    net = compile_plan(two_node(lanes=2))
    l0, l1 = net.edges[0].lanes
    for p, q in zip(l0.shape, l1.shape):
        assert abs(math.dist(p, q) - 3.2) < 1e-6
    assert l0.shape[0].y > l1.shape[0].y  # lane 0 is the inner lane, next to the centerline


def test_lane_offsets_on_random_plans():
    for seed in range(30):
        plan = random_plan(seed)
        assert lane_offset_ok(compile_plan(plan), plan), seed


@pytest.mark.parametrize("kinds", [FAULT_KINDS[:1], FAULT_KINDS[:3], FAULT_KINDS])
def test_validate_reports_every_injected_fault(kinds):
    for seed in range(10):
        plan, expected = inject_faults(random_plan(seed), kinds, seed)
        diags = validate(plan)
        assert len(diags) >= len(kinds)
        got = {(d.code, d.subject) for d in diags}
        assert set(expected) <= got


def test_unreferenced_node_dropped_with_warning():
    plan = NetworkPlan(two_node().nodes + (NodeDecl("lonely", Point(5, 50)),), two_node().edges)
    net = compile_plan(plan)
    assert "lonely" not in net.junction_map
    assert any("lonely" in w for w in net.warnings)


@pytest.mark.parametrize("a,b,want", [(90, 90, "s"), (0, 90, "l"), (0, 270, "r"), (0, 180, "t"), (350, 10, "s")])
def test_classify_direction_examples(a, b, want):
    assert classify_direction(a, b) == want


def test_classify_direction_partitions_grid():
    opts = CompileOptions()
    for k in range(-1799, 1801):
        delta = k / 10
        got = classify_direction(0.0, delta % 360)
        d = signed_delta(0.0, delta % 360)
        assert abs(d - delta) < 1e-9
        if abs(d) <= opts.straight_threshold_deg:
            assert got == "s"
        elif opts.straight_threshold_deg < d <= opts.uturn_threshold_deg:
            assert got == "l"
        elif -opts.uturn_threshold_deg <= d < -opts.straight_threshold_deg:
            assert got == "r"
        else:
            assert got == "t"


@settings(max_examples=200)
@given(st.floats(0, 359.999), st.floats(0, 359.999))
def test_classify_direction_total(a, b):
    assert classify_direction(a, b) in {"s", "l", "r", "t"}


def test_scene_four_way():
    assert classify_scene(compile_plan(star([0, 90, 180, 270]))) is SceneType.four_way


def test_scene_t_and_y():
    assert classify_scene(compile_plan(star([0, 180, 270]))) is SceneType.t_intersection
    assert classify_scene(compile_plan(star([0, 120, 240]))) is SceneType.y_intersection


def fork_plan(speed=13.89, angle=20.0) -> NetworkPlan:
    a = math.radians(angle)
    pts = {"u": (-200, 0), "c": (0, 0), "l": (200 * math.cos(a), 200 * math.sin(a)),
           "r": (200 * math.cos(a), -200 * math.sin(a))}
    nodes = tuple(NodeDecl(k, Point(round(x, 2), round(y, 2))) for k, (x, y) in pts.items())
    edges = (EdgeDecl("main", "u", "c", 2, speed), EdgeDecl("left", "c", "l", 1, speed),
             EdgeDecl("right", "c", "r", 1, speed))
    return NetworkPlan(nodes, edges)


def test_scene_fork_merge_ramp():
    assert classify_scene(compile_plan(fork_plan())) is SceneType.fork
    p = fork_plan()
    merged = NetworkPlan(p.nodes, (EdgeDecl("main", "c", "u", 2), EdgeDecl("left", "l", "c"), EdgeDecl("right", "r", "c")))
    assert classify_scene(compile_plan(merged)) is SceneType.merge
    assert classify_scene(compile_plan(fork_plan(speed=33.33, angle=12))) is SceneType.ramp


def test_scene_general():
    assert classify_scene(compile_plan(two_node())) is SceneType.general


def test_feedback_lines():
    diags = [Diagnostic(DiagCode.UnknownNode, "edge 'e1' from-node 'n5' is not declared in the node file", "n5"),
             Diagnostic(DiagCode.Unreachable, "edge 'e7' cannot be reached from edge 'e3'", "e3->e7"),
             Diagnostic(DiagCode.TooShort, "edge 'x' is 1.00 m long", "x")]
    text = diagnostics_to_feedback(diags)
    lines = [l for l in text.splitlines() if l.strip()]
    assert len(lines) == 3 and lines[0].startswith("1.") and lines[2].startswith("3.")
    assert "n5" in lines[0] and "declare the node or fix the edge endpoint" in lines[0]
    assert "e3" in lines[1] and "e7" in lines[1] and "connected edges" in lines[1]
    assert diagnostics_to_feedback(diags) == text
    with pytest.raises(ValueError):
        diagnostics_to_feedback([])


def test_recompile_from_network_is_isomorphic():
    for seed in range(20):
        net = compile_plan(random_plan(seed))
        again = compile_plan(plan_from_network(net))
        assert [e.id for e in again.edges] == [e.id for e in net.edges]
        assert set(again.connections) == set(net.connections)


def test_compile_deterministic():
    plan = random_plan(77)
    assert serialize_net(compile_plan(plan)) == serialize_net(compile_plan(plan))


def test_bad_options():
    with pytest.raises(ValueError):
        CompileOptions(straight_threshold_deg=160)
    with pytest.raises(ValueError):
        CompileOptions(lane_width=0)
