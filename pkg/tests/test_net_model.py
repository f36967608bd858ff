import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plan_factory import random_plan
from scenoforge.compiler import compile as compile_plan
from scenoforge.geometry import Point
from scenoforge.net_model import (
    DiagCode, Diagnostic, DiagnosticError, EdgeDecl, NetworkPlan, NodeDecl, Route, Trip, network_stats,
    parse_net, parse_plain, parse_routes, parse_sumocfg, parse_trips, serialize_net, serialize_plain,
    serialize_routes, serialize_sumocfg, serialize_trips,
)

NODES = """<nodes>
    <node id="a" x="0" y="0" type="priority"/>
    <node id="b" x="100" y="0"/>
</nodes>"""
EDGES = """<edges>
    <edge id="ab" from="a" to="b" numLanes="2" speed="13.89"/>
</edges>"""


def codes(exc_info) -> list[DiagCode]:
    return [d.code for d in exc_info.value.diagnostics]


def test_parse_minimal_plain():
    plan = parse_plain(NODES, EDGES)
    assert [n.id for n in plan.nodes] == ["a", "b"]
    assert plan.nodes[1].kind == "priority"
    e = plan.edges[0]
    assert (e.from_node, e.to_node, e.num_lanes, e.speed) == ("a", "b", 2, 13.89)


def test_plain_does_not_check_references():
    plan = parse_plain(NODES, EDGES.replace('to="b"', 'to="zz"'))
    assert plan.edges[0].to_node == "zz"


@pytest.mark.parametrize("bad_id", ["#n0", "n:0", "n 0"])
def test_bad_identifier_rejected(bad_id):
    with pytest.raises(DiagnosticError) as ei:
        parse_plain(NODES.replace('id="a"', f'id="{bad_id}"'), EDGES)
    assert DiagCode.BadAttribute in codes(ei)
    assert any(bad_id in d.message for d in ei.value.diagnostics)


def test_unknown_attribute_is_an_error():
    with pytest.raises(DiagnosticError) as ei:
        parse_plain(NODES, EDGES.replace('speed="13.89"', 'speed="13.89" priority="3"'))
    assert codes(ei) == [DiagCode.UnknownAttribute]
    assert "priority" in ei.value.diagnostics[0].message


def test_malformed_xml():
    with pytest.raises(DiagnosticError) as ei:
        parse_plain(NODES, EDGES.replace("</edges>", ""))
    assert codes(ei) == [DiagCode.FormatError]


def test_duplicate_node_id():
    with pytest.raises(DiagnosticError) as ei:
        parse_plain(NODES.replace('id="b"', 'id="a"'), EDGES)
    assert DiagCode.DuplicateId in codes(ei)


def test_bad_number():
    with pytest.raises(DiagnosticError) as ei:
        parse_plain(NODES.replace('x="100"', 'x="far"'), EDGES)
    assert DiagCode.BadAttribute in codes(ei)


def test_every_diagnostic_names_its_subject():
    bad = NODES.replace('id="a"', 'id="#a"').replace('x="100"', 'x="nan?"')
    with pytest.raises(DiagnosticError) as ei:
        parse_plain(bad, EDGES.replace('numLanes="2"', 'numLanes="2" width="3"'))
    assert len(ei.value.diagnostics) >= 3
    for d in ei.value.diagnostics:
        assert d.subject in d.message


def test_empty_plan_canonical():
    assert serialize_plain(NetworkPlan()) == ("<nodes/>\n", "<edges/>\n")


def test_shape_two_decimal_canonical():
    plan = NetworkPlan(
        (NodeDecl("a", Point(0, 0)), NodeDecl("b", Point(50, 10))),
        (EdgeDecl("e", "a", "b", shape=(Point(0, 0), Point(50, 10))),),
    )
    _, edges = serialize_plain(plan)
    assert 'shape="0.00,0.00 50.00,10.00"' in edges


def test_comments_survive_round_trip():
    text = NODES.replace("<nodes>", "<nodes>\n    <!-- west end -->")
    plan = parse_plain(text, EDGES)
    assert plan.nodes[0].comments == (" west end ",)
    n2, e2 = serialize_plain(plan)
    assert parse_plain(n2, e2) == plan
    assert "west end" in n2


@pytest.mark.parametrize("seed", range(100))
def test_plain_round_trip(seed):
    plan = random_plan(seed, comments=True)
    nodes, edges = serialize_plain(plan)
    assert parse_plain(nodes, edges) == plan
    assert serialize_plain(parse_plain(nodes, edges)) == (nodes, edges)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e5, 1e5), st.floats(-1e5, 1e5)), min_size=2, max_size=6, unique=True))
def test_plain_round_trip_arbitrary_coordinates(coords):
    nodes = tuple(NodeDecl(f"n{i}", Point(round(x, 2), round(y, 2))) for i, (x, y) in enumerate(coords))
    plan = NetworkPlan(nodes, (EdgeDecl("e", "n0", "n1", 2, 9.5, "Main Street"),))
    assert parse_plain(*serialize_plain(plan)) == plan


def test_net_single_edge_shape():
    plan = NetworkPlan((NodeDecl("a", Point(0, 0)), NodeDecl("b", Point(100, 0))), (EdgeDecl("e", "a", "b"),))
    text = serialize_net(compile_plan(plan))
    assert text.count("<edge ") == 1
    assert text.count('<lane id="e_0" index="0"') == 1


@pytest.mark.parametrize("seed", range(40))
def test_net_text_round_trip_is_exact(seed):
    net = compile_plan(random_plan(seed))
    text = serialize_net(net)
    parsed = parse_net(text)
    assert serialize_net(parsed) == text
    assert parse_net(serialize_net(parsed)) == parsed
    # in memory the only loss is rounding of coordinates to 2 decimals
    for a, b in zip(net.edges, parsed.edges):
        assert a.id == b.id and a.num_lanes == b.num_lanes
        for la, lb in zip(a.lanes, b.lanes):
            # each vertex moves at most 0.005*sqrt(2)
            assert abs(la.length - lb.length) <= 0.0142 * len(la.shape)
            assert all(abs(p.x - q.x) <= 0.005 and abs(p.y - q.y) <= 0.005 for p, q in zip(la.shape, lb.shape))
    assert net.connections == parsed.connections


def test_net_unknown_lane_in_connection():
    plan = NetworkPlan(
        (NodeDecl("a", Point(0, 0)), NodeDecl("b", Point(100, 0)), NodeDecl("c", Point(200, 0))),
        (EdgeDecl("e1", "a", "b", 2), EdgeDecl("e2", "b", "c", 2)),
    )
    text = serialize_net(compile_plan(plan))
    bad = text.replace('fromLane="1"', 'fromLane="5"')
    assert bad != text
    with pytest.raises(DiagnosticError) as ei:
        parse_net(bad)
    assert DiagCode.UnknownLane in codes(ei)


def test_net_ignores_unsupported_elements_with_warning():
    plan = NetworkPlan((NodeDecl("a", Point(0, 0)), NodeDecl("b", Point(100, 0))), (EdgeDecl("e", "a", "b"),))
    text = serialize_net(compile_plan(plan))
    extra = text.replace(
        "</net>",
        '    <edge id=":b_0" function="internal">\n        <lane id=":b_0_0" index="0" speed="1" length="1" '
        'shape="0,0 1,1"/>\n    </edge>\n    <tlLogic id="b" type="static" programID="0" offset="0"/>\n</net>',
    )
    net = parse_net(extra)
    assert [e.id for e in net.edges] == ["e"]
    assert net.warnings


def test_junction_inc_lanes_match_incidence_scan():
    net = compile_plan(random_plan(11, n_nodes=8))
    for j in net.junctions:
        scan = [l.id for e in net.edges if e.to_junction == j.id for l in e.lanes]
        assert sorted(j.incoming_lanes) == sorted(scan)


def test_offramp_fixture_stats():
    from conftest import FIXTURES

    net = parse_net((FIXTURES / "rag" / "nets" / "offramp.net.xml").read_text())
    stats = network_stats(net)
    assert stats.total_edges == 3
    assert stats.total_lanes == 3 + 3 + 1
    # hand count: two 300 m freeway edges and a ramp of five 35 m segments, lanes offset on the curve
    assert 600 + 170 < stats.total_edge_length < 600 + 180


def test_network_stats_trivial():
    plan = NetworkPlan((NodeDecl("a", Point(0, 0)), NodeDecl("b", Point(100, 0))), (EdgeDecl("e", "a", "b", 2),))
    s = network_stats(compile_plan(plan))
    assert (s.total_lanes, s.total_edges) == (2, 1)
    assert math.isclose(s.total_edge_length, 100.0)


def test_t_fixture_stats_by_hand():
    c, w, e, s = Point(0, 0), Point(-50, 0), Point(50, 0), Point(0, -50)
    nodes = (NodeDecl("c", c), NodeDecl("w", w), NodeDecl("e", e), NodeDecl("s", s))
    edges = []
    for leg in ("w", "e", "s"):
        edges += [EdgeDecl(f"{leg}c", leg, "c", 2), EdgeDecl(f"c{leg}", "c", leg, 2)]
    stats = network_stats(compile_plan(NetworkPlan(nodes, tuple(edges))))
    assert (stats.total_lanes, stats.total_edges) == (12, 6)
    assert math.isclose(stats.total_edge_length, 300.0)


def test_trips_round_trip():
    trips = [Trip("av", "AV", "e1", "e2", 0.0), Trip("bv1", "BV", "e3", "e2", 2.5)]
    text = serialize_trips(trips)
    assert parse_trips(text) == trips
    assert '<trip id="bv1" type="BV" from="e3" to="e2" depart="2.50"/>' in text


def test_trips_reject_unknown_type_and_duplicates():
    text = serialize_trips([Trip("a", "AV", "e1", "e2", 0.0)])
    with pytest.raises(DiagnosticError):
        parse_trips(text.replace('type="AV"', 'type="truck"'))
    with pytest.raises(DiagnosticError) as ei:
        parse_trips(text.replace("</trips>", '    <trip id="a" type="BV" from="e1" to="e2" depart="1"/>\n</trips>'))
    assert DiagCode.DuplicateId in codes(ei)


def test_routes_round_trip():
    routes = [Route("av", ("e1", "e2"), 1.0, "AV"), Route("bv", ("e3",), 0.0)]
    text = serialize_routes(routes)
    assert parse_routes(text) == routes
    assert text.index('<vType id="AV"') < text.index("<vehicle")


def test_sumocfg_round_trip():
    text = serialize_sumocfg("net.net.xml", "routes.rou.xml")
    cfg = parse_sumocfg(text)
    assert cfg["net-file"] == "net.net.xml" and cfg["route-files"] == "routes.rou.xml"


def test_diagnostic_needs_message():
    with pytest.raises(ValueError):
        Diagnostic(DiagCode.FormatError, "", "x")


def test_serialization_is_deterministic():
    plan = random_plan(5)
    assert serialize_plain(plan) == serialize_plain(random_plan(5))
    assert serialize_net(compile_plan(plan)) == serialize_net(compile_plan(random_plan(5)))
