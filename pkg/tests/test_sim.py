import math

import numpy as np
import pytest

from conftest import CROWDED_FORK
from scenoforge.compiler import compile as compile_plan
from scenoforge.geometry import Point
from scenoforge.net_model import EdgeDecl, NetworkPlan, NodeDecl, Route, parse_net, parse_routes
from scenoforge.scenario import Scenario
from scenoforge.sim import IDMParams, SimConfig, simulate


def straight_road(length=500.0, speed=13.89, lanes=1, pieces=1, slow_tail=None) -> NetworkPlan:
    nodes = [NodeDecl(f"p{i}", Point(round(i * length / pieces, 2), 0)) for i in range(pieces + 1)]
    edges = []
    for i in range(pieces):
        sp = slow_tail if (slow_tail is not None and i == pieces - 1) else speed
        edges.append(EdgeDecl(f"s{i}", f"p{i}", f"p{i + 1}", lanes, sp))
    return NetworkPlan(tuple(nodes), tuple(edges))


def crowded_fork() -> Scenario:
    net = parse_net((CROWDED_FORK / "net.net.xml").read_text())
    routes = parse_routes((CROWDED_FORK / "routes.rou.xml").read_text())
    return Scenario(net, tuple(routes), "av")


def progress(net, route_edges, s) -> float:
    done = sum(net.edge_map[e].lanes[0].length for e in route_edges[:s.route_index])
    if s.junction_offset is not None:
        return done + s.offset + s.junction_offset
    return done + s.offset


def test_free_flow_converges_from_rest():
    net = compile_plan(straight_road(1000.0))
    sc = Scenario(net, (Route("av", ("s0",), 0.0, "AV"),), "av")
    trace = simulate(sc, SimConfig(depart_speed=0.0, horizon=90))
    states = trace.vehicle_states("av")
    by_60 = [s.speed for t, s in states if t <= 60.0]
    assert abs(by_60[-1] - 13.89) < 0.01
    assert not trace.events_of("av", "collision")
    assert trace.events_of("av", "arrive")


def test_free_flow_at_limit_from_depart():
    net = compile_plan(straight_road(500.0))
    sc = Scenario(net, (Route("av", ("s0",), 0.0, "AV"),), "av")
    trace = simulate(sc)
    assert all(abs(s.speed - 13.89) < 0.01 for _, s in trace.vehicle_states("av"))


def platoon(seed: int) -> Scenario:
    rng = np.random.default_rng(seed)
    fast = float(rng.uniform(15, 30))
    slow = float(rng.uniform(4, 12))
    net = compile_plan(straight_road(1500.0, round(fast, 2), pieces=3, slow_tail=round(slow, 2)))
    n = int(rng.integers(2, 7))
    t = 0.0
    routes = []
    for i in range(n):
        routes.append(Route(f"v{i}", ("s0", "s1", "s2"), round(t, 2), "AV" if i == n - 1 else "BV"))
        t += float(rng.uniform(0.5, 4.0))
    return Scenario(net, tuple(routes), f"v{n - 1}")


@pytest.mark.parametrize("seed", range(50))
def test_platoon_never_collides(seed):
    sc = platoon(seed)
    trace = simulate(sc, SimConfig(horizon=150))
    assert not [e for e in trace.events if e.kind == "collision"]
    ids = [r.vehicle_id for r in sc.routes]
    edges = sc.routes[0].edges
    length = IDMParams().veh_length
    for step in trace.states:
        pos = {s.id: progress(sc.network, edges, s) for s in step if s.active}
        present = [v for v in ids if v in pos]
        for lead, follow in zip(present, present[1:]):
            assert pos[lead] - pos[follow] - length > 0


def test_slower_leader_pair():
    net = compile_plan(straight_road(1200.0, 20.0, pieces=2, slow_tail=6.0))
    sc = Scenario(net, (Route("lead", ("s0", "s1"), 0.0), Route("av", ("s0", "s1"), 2.0, "AV")), "av")
    trace = simulate(sc, SimConfig(horizon=200))
    gaps = [s.leader_gap for _, s in trace.vehicle_states("av") if s.leader_gap is not None]
    assert gaps and min(gaps) > 0
    assert trace.events_of("av", "arrive")


def test_trace_is_deterministic():
    a = simulate(crowded_fork())
    b = simulate(crowded_fork())
    assert a.digest() == b.digest()
    assert a.events == b.events


def test_trace_times_strictly_increase_and_single_collision():
    trace = simulate(crowded_fork())
    assert all(t1 < t2 for t1, t2 in zip(trace.times, trace.times[1:]))
    for vid in ("bv1", "av", "bv2", "bv3"):
        assert len(trace.events_of(vid, "collision")) <= 1


@pytest.mark.parametrize("policy", ["idm_follow", "idm_with_lane_change"])
def test_crowded_fork_fails(policy):
    trace = simulate(crowded_fork(), av_policy=policy)
    bad = trace.events_of("av", "collision") + trace.events_of("av", "timeout")
    assert bad


def test_collided_vehicles_stop():
    trace = simulate(crowded_fork())
    hit = trace.events_of("av", "collision")[0]
    after = [s for t, s in trace.vehicle_states("av") if t > hit.time]
    assert all(not s.active and s.speed == 0.0 for s in after)


def test_minor_road_yields_to_major():
    # major east-west 2-lane road, minor 1-lane side road from the south
    nodes = (NodeDecl("w", Point(-200, 0)), NodeDecl("c", Point(0, 0)), NodeDecl("e", Point(200, 0)),
             NodeDecl("s", Point(0, -200)))
    edges = (EdgeDecl("wc", "w", "c", 2, 13.89), EdgeDecl("ce", "c", "e", 2, 13.89),
             EdgeDecl("sc", "s", "c", 1, 13.89))
    net = compile_plan(NetworkPlan(nodes, edges))
    # both reach the junction at about the same time; the side road merges into the major road
    sc = Scenario(net, (Route("major", ("wc", "ce"), 0.0), Route("av", ("sc", "ce"), 0.0, "AV")), "av")
    trace = simulate(sc)
    assert not [e for e in trace.events if e.kind == "collision"]
    arrive = {e.vehicles[0]: e.time for e in trace.events if e.kind == "arrive"}
    assert arrive["major"] < arrive["av"]
    assert min(s.speed for _, s in trace.vehicle_states("av")) < 5.0


def test_lane_change_policy_overtakes_slow_leader():
    nodes = (NodeDecl("a", Point(0, 0)), NodeDecl("b", Point(600, 0)), NodeDecl("c", Point(1400, 0)))
    edges = (EdgeDecl("s0", "a", "b", 2, 20.0), EdgeDecl("s1", "b", "c", 2, 20.0))
    net = compile_plan(NetworkPlan(nodes, edges))
    # everyone starts from rest: the BV enters s1 late, so the AV closes in on it at speed
    sc = Scenario(net, (Route("av", ("s0", "s1"), 0.0, "AV"), Route("slow", ("s1",), 30.0)), "av")
    cfg = SimConfig(depart_speed=0.0)
    follow = simulate(sc, cfg, "idm_follow")
    change = simulate(sc, cfg, "idm_with_lane_change")
    assert {s.lane for _, s in follow.vehicle_states("av")} == {0}
    assert {s.lane for _, s in change.vehicle_states("av")} == {0, 1}
    assert not [e for e in change.events if e.kind == "collision"]
    t_follow = follow.events_of("av", "arrive")[0].time
    t_change = change.events_of("av", "arrive")[0].time
    assert t_change < t_follow


def test_bad_policy_and_config():
    net = compile_plan(straight_road())
    sc = Scenario(net, (Route("av", ("s0",), 0.0, "AV"),), "av")
    with pytest.raises(ValueError):
        simulate(sc, av_policy="llm")
    with pytest.raises(ValueError):
        SimConfig(dt=0)
    with pytest.raises(ValueError):
        SimConfig(dt=1.0, horizon=0.5)
    with pytest.raises(ValueError):
        IDMParams(a_max=0)


def test_offsets_within_lane():
    trace = simulate(crowded_fork())
    net = crowded_fork().network
    for step in trace.states:
        for s in step:
            length = net.lane_map[f"{s.edge}_{s.lane}"].length
            assert -1e-9 <= s.offset <= length + 1e-9
            assert s.speed >= 0 and math.isfinite(s.accel)
