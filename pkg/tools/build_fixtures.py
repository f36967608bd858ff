"""Regenerate the test fixtures: replay transcripts, the RAG store, and the crowded-fork scenario.

Transcripts are produced by running the real pipeline in record mode against
a scripted chat server, so every recorded request is exactly what the
pipeline sends.  Run from the repository root:

    python3 tools/build_fixtures.py
"""
from __future__ import annotations

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from fake_llm import ScriptedLLM  # noqa: E402

from scenoforge.compiler import compile as compile_plan  # noqa: E402
from scenoforge.geometry import Point  # noqa: E402
from scenoforge.llm import Backend, BackendConfig  # noqa: E402
from scenoforge.net_model import (  # noqa: E402
    EdgeDecl, NetworkPlan, NodeDecl, Route, serialize_net, serialize_routes,
)
from scenoforge.pipeline import RunConfig, crash_report, run_generate  # noqa: E402
from scenoforge.rag import RagStore, ingest_net  # noqa: E402

FIX = ROOT / "tests" / "fixtures"
TRANSCRIPTS = FIX / "transcripts"
ENDPOINT = "http://llm.fixture.invalid/v1"


# ------------------------------------------------------------------ geometry


def polar(p: tuple[float, float], heading: float, length: float) -> tuple[float, float]:
    a = math.radians(heading)
    return (round(p[0] + length * math.cos(a), 2), round(p[1] + length * math.sin(a), 2))


def arc(start, headings, seg_len):
    pts = [start]
    for h in headings:
        pts.append(polar(pts[-1], h, seg_len))
    return pts


def shape_attr(pts) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)


# --------------------------------------------------------------- reply text


def node(nid, x, y, comment=None):
    return (nid, x, y, comment)


def edge(eid, a, b, lanes, speed, name, comment=None, shape=None):
    return dict(id=eid, a=a, b=b, lanes=lanes, speed=speed, name=name, comment=comment, shape=shape)


def two_way(a, b, ab, ba, name, lanes, speed, dir_ab, dir_ba):
    return [edge(ab, a, b, lanes, speed, name, f"{name}, {dir_ab}"),
            edge(ba, b, a, lanes, speed, name, f"{name}, {dir_ba}")]


def nodes_xml(nodes) -> str:
    out = ["<nodes>"]
    for nid, x, y, comment in nodes:
        if comment:
            out.append(f"    <!-- {comment} -->")
        out.append(f'    <node id="{nid}" x="{x:.2f}" y="{y:.2f}" type="priority"/>')
    out.append("</nodes>")
    return "\n".join(out)


def edges_xml(edges) -> str:
    out = ["<edges>"]
    for e in edges:
        if e["comment"]:
            out.append(f"    <!-- {e['comment']} -->")
        shape = f' shape="{shape_attr(e["shape"])}"' if e["shape"] else ""
        out.append(f'    <edge id="{e["id"]}" from="{e["a"]}" to="{e["b"]}" numLanes="{e["lanes"]}" '
                   f'speed="{e["speed"]:.2f}" name="{e["name"]}"{shape}/>')
    out.append("</edges>")
    return "\n".join(out)


def net_reply(description, steps, nodes, edges, *, nodes_text=None, edges_text=None, unclosed=False) -> str:
    reasoning = "\n".join(f"{i}. {s}" for i, s in enumerate(steps, 1))
    n = nodes_text if nodes_text is not None else nodes_xml(nodes)
    e = edges_text if edges_text is not None else edges_xml(edges)
    tail = "\n" if unclosed else "\n```\n"
    return (f"Description:\n{description}\n\nReasoning:\n{reasoning}\n\n"
            f"```nodes\n{n}\n```\n\n```edges\n{e}{tail}")


def interp_reply(description, reasoning, scene, count, lanes) -> str:
    lane_lines = "".join(f"  {k}: {v}\n" for k, v in lanes.items())
    return (f"Description:\n{description}\n\nReasoning:\n{reasoning}\n\n"
            f"```footer\nscene_type: {scene}\nvehicle_count: {count}\nlanes:\n{lane_lines}```\n")


def trips_reply(reasoning, trips) -> str:
    lines = ["<trips>"]
    for tid, kind, a, b, depart in trips:
        lines.append(f'    <trip id="{tid}" type="{kind}" from="{a}" to="{b}" depart="{depart:.2f}"/>')
    lines.append("</trips>")
    return f"Reasoning:\n{reasoning}\n\n```trips\n" + "\n".join(lines) + "\n```\n"


def verdict_reply(passed: bool, reasoning: str) -> str:
    return f"```verdict\n{'PASS' if passed else 'FAIL'}\n{reasoning}\n```\n"


# ------------------------------------------------------------ scene scripts


def t_scene():
    interp = interp_reply(
        "Harbor Road is a straight east-west arterial with two lanes in each direction and a 13.89 m/s limit. "
        "Mill Lane, a single-lane side road limited to 11.11 m/s, ends at Harbor Road from the south and forms "
        "a T-intersection where Mill Lane traffic must give way. Four vehicles take part: the AV waits on Mill "
        "Lane to turn left onto westbound Harbor Road, one car approaches along Harbor Road from the west, one "
        "from the east, and a fourth car queues behind the AV.",
        "A left turn from the minor leg crosses both directions of the major road, so the AV has to judge gaps "
        "in two streams. Timing the Harbor Road cars to arrive just after the AV reaches the stop line forces "
        "that judgement, and the follower adds pressure from behind.",
        "t_intersection", 4, {"Harbor Road": 2, "Mill Lane": 1})
    nodes = [node("c", 0, 0, "T-junction of Harbor Road and Mill Lane"), node("w", -150, 0, "west end of Harbor Road"),
             node("e", 150, 0, "east end of Harbor Road"), node("s", 0, -120, "south end of Mill Lane")]
    edges = (two_way("w", "c", "wc", "cw", "Harbor Road", 2, 13.89, "eastbound", "westbound")
             + two_way("c", "e", "ce", "ec", "Harbor Road", 2, 13.89, "eastbound", "westbound")
             + two_way("s", "c", "sc", "cs", "Mill Lane", 1, 11.11, "northbound", "southbound"))
    net = net_reply(
        "A T-intersection: Harbor Road runs east-west through node c and Mill Lane joins it from the south.",
        ["Place the junction c at the origin and the road ends 150 m west and east and 120 m south.",
         "Harbor Road needs two edges per side of the junction, one per direction, each with 2 lanes at 13.89 m/s.",
         "Mill Lane is a pair of single-lane edges at 11.11 m/s between s and c."],
        nodes, edges)
    trips = trips_reply(
        "The AV turns left from Mill Lane onto westbound Harbor Road. bv1 crosses in front of it eastbound, "
        "bv2 comes from the east into the AV's target road, and bv3 follows the AV up Mill Lane.",
        [("av", "AV", "sc", "cw", 2.0), ("bv1", "BV", "wc", "ce", 0.0), ("bv2", "BV", "ec", "cw", 1.0),
         ("bv3", "BV", "sc", "ce", 5.0)])
    return interp, net, trips, nodes, edges


def y_scene():
    interp = interp_reply(
        "Quarry Road climbs north with two lanes per direction at 13.89 m/s and splits at an acute angle into "
        "Orchard Way toward the north-east and Kiln Street toward the north-west, each one lane per direction "
        "at 11.11 m/s. Three vehicles: the AV drives up Quarry Road and bears right onto Orchard Way while a "
        "car from Kiln Street heads down Quarry Road and a car from Orchard Way crosses over to Kiln Street.",
        "At a Y junction the branches meet at a shallow angle, so sight lines are short and the AV's right "
        "fork conflicts with traffic moving between the two branches.",
        "y_intersection", 3, {"Quarry Road": 2, "Orchard Way": 1, "Kiln Street": 1})
    nodes = [node("c", 0, 0, "split point"), node("s", 0, -160, "south end of Quarry Road"),
             node("ne", 113.14, 113.14, "end of Orchard Way"), node("nw", -113.14, 113.14, "end of Kiln Street")]
    edges = (two_way("s", "c", "sc", "cs", "Quarry Road", 2, 13.89, "northbound", "southbound")
             + two_way("c", "ne", "cne", "nec", "Orchard Way", 1, 11.11, "north-east bound", "south-west bound")
             + two_way("c", "nw", "cnw", "nwc", "Kiln Street", 1, 11.11, "north-west bound", "south-east bound"))
    steps = ["Put the split point c at the origin with Quarry Road 160 m to the south.",
             "Orchard Way and Kiln Street leave c at 45 degrees either side of north, 160 m long.",
             "Each road is a pair of edges, one per direction."]
    desc = "A Y-shaped intersection where Quarry Road divides into Orchard Way and Kiln Street."
    bad = net_reply(desc, steps, nodes, edges, unclosed=True)
    net = net_reply(desc, steps, nodes, edges)
    trips = trips_reply(
        "The AV takes the right fork while bv1 comes down from Kiln Street and bv2 crosses from Orchard Way "
        "to Kiln Street, both reaching c as the AV arrives.",
        [("av", "AV", "sc", "cne", 0.0), ("bv1", "BV", "nwc", "cs", 1.0), ("bv2", "BV", "nec", "cnw", 2.0)])
    return interp, (bad, net), trips


def four_way_scene(elm_speed=13.89, cedar_speed=11.11):
    nodes = [node("c", 0, 0, "Elm Street and Cedar Avenue"), node("n", 0, 150, "north end of Cedar Avenue"),
             node("s", 0, -150, "south end of Cedar Avenue"), node("e", 150, 0, "east end of Elm Street"),
             node("w", -150, 0, "west end of Elm Street")]
    edges = (two_way("w", "c", "wc", "cw", "Elm Street", 2, elm_speed, "eastbound", "westbound")
             + two_way("c", "e", "ce", "ec", "Elm Street", 2, elm_speed, "eastbound", "westbound")
             + two_way("s", "c", "sc", "cs", "Cedar Avenue", 1, cedar_speed, "northbound", "southbound")
             + two_way("c", "n", "cn", "nc", "Cedar Avenue", 1, cedar_speed, "northbound", "southbound"))
    return nodes, edges


def four_way_set():
    interp = interp_reply(
        "Elm Street runs east-west with two lanes in each direction and a 13.89 m/s limit; Cedar Avenue runs "
        "north-south with one lane each way at 11.11 m/s. They cross at an unsignalized four-way intersection. "
        "Four vehicles: the AV goes straight north on Cedar Avenue, two cars cross on Elm Street from opposite "
        "sides, and one car turns left from southbound Cedar Avenue.",
        "Crossing flows from both sides of the major road arrive within a few seconds of the AV, so it has to "
        "yield correctly and then clear the box before the turning car.",
        "four_way", 4, {"Elm Street": 2, "Cedar Avenue": 1})
    nodes, edges = four_way_scene()
    net = net_reply(
        "A four-way intersection of Elm Street and Cedar Avenue at node c.",
        ["Put c at the origin and the four road ends 150 m away on each axis.",
         "Elm Street edges get 2 lanes at 13.89 m/s; Cedar Avenue edges get 1 lane at 11.11 m/s.",
         "Every road segment is a pair of edges, one per direction."],
        nodes, edges)
    trips = trips_reply(
        "The AV crosses straight north. bv1 and bv2 cross on Elm Street from the west and east, bv3 turns "
        "left from the north leg.",
        [("av", "AV", "sc", "cn", 1.0), ("bv1", "BV", "wc", "ce", 0.0), ("bv2", "BV", "ec", "cw", 0.5),
         ("bv3", "BV", "nc", "ce", 2.0)])
    return interp, net, trips


FORK_VARIANTS = [
    dict(main="Lakeshore Drive", left="Lakeshore Drive North", right="Beacon Road", lanes=2, approach=1,
         extend=False, angle=15, count=4, length=200),
    dict(main="Canal Street", left="Canal Street East", right="Foundry Lane", lanes=2, approach=2,
         extend=False, angle=18, count=4, length=180),
    dict(main="Route 9", left="Route 9 Bypass", right="Old Mill Road", lanes=3, approach=2,
         extend=True, angle=12, count=5, length=220),
    dict(main="Birch Avenue", left="Birch Avenue Upper", right="Station Road", lanes=2, approach=1,
         extend=False, angle=20, count=3, length=160),
    dict(main="Granite Parkway", left="Granite Parkway West", right="Quarry Spur", lanes=3, approach=2,
         extend=False, angle=14, count=4, length=240),
    dict(main="Willow Road", left="Willow Road North", right="Ferry Lane", lanes=2, approach=1,
         extend=True, angle=16, count=4, length=190),
    dict(main="Summit Boulevard", left="Summit Boulevard Upper", right="Pine Hollow Road", lanes=2, approach=2,
         extend=True, angle=22, count=5, length=200),
    dict(main="Harvest Road", left="Harvest Road East", right="Barn Lane", lanes=1, approach=1,
         extend=False, angle=17, count=3, length=150),
    dict(main="Coastal Highway", left="Coastal Highway Inland", right="Pier Road", lanes=3, approach=1,
         extend=False, angle=10, count=4, length=260),
    dict(main="Market Street", left="Market Street North", right="Tannery Row", lanes=2, approach=2,
         extend=False, angle=19, count=4, length=170),
]


def fork_scene(v, *, bad_net=None, bad_trips=False):
    """Scripted replies for one fork variant; ``bad_*`` prepend a first reply that fails its check."""
    L, ang = v["length"], v["angle"]
    nodes = [node("u", -L, 0, f"start of {v['main']}"), node("c", 0, 0, "fork point")]
    if v["approach"] == 2:
        nodes.insert(1, node("m", -L / 2, 0, f"midpoint of {v['main']}"))
    lp, rp = polar((0, 0), ang, L), polar((0, 0), -ang, L)
    nodes += [node("l", *lp, f"end of {v['left']}"), node("r", *rp, f"end of {v['right']}")]
    if v["approach"] == 2:
        edges = [edge("main_a", "u", "m", v["lanes"], 13.89, v["main"], f"{v['main']}, first half"),
                 edge("main_b", "m", "c", v["lanes"], 13.89, v["main"], f"{v['main']}, second half")]
        first = "main_a"
    else:
        edges = [edge("main", "u", "c", v["lanes"], 13.89, v["main"], f"{v['main']} toward the fork")]
        first = "main"
    edges += [edge("left_branch", "c", "l", 1, 13.89, v["left"], f"{v['left']}, bearing left"),
              edge("right_branch", "c", "r", 1, 11.11, v["right"], f"{v['right']}, bearing right")]
    right_end = "right_branch"
    if v["extend"]:
        xp = polar(rp, -ang, L / 2)
        nodes.append(node("x", *xp, f"far end of {v['right']}"))
        edges.append(edge("right_ext", "r", "x", 1, 11.11, v["right"], f"{v['right']}, continued"))
        right_end = "right_ext"
    lanes = {v["main"]: v["lanes"], v["left"]: 1, v["right"]: 1}
    interp = interp_reply(
        f"{v['main']} carries {v['lanes']} lane(s) at 13.89 m/s and splits into two at a slight angle: "
        f"{v['left']} bears left and {v['right']} bears right, each with one lane. {v['count']} vehicles "
        f"take part and crowd the AV just before the split, so it must merge into its branch in dense traffic.",
        "Forks concentrate lane changes right before the split; vehicles alongside and behind the AV leave it "
        "little room to reach its branch, which is the interaction this test targets.",
        "fork", v["count"], lanes)
    steps = [f"{v['main']} ends at the fork point c, {L} m from its start.",
             f"The branches leave c at +{ang} and -{ang} degrees.",
             "All roads are one-way in the direction of travel through the fork."]
    desc = f"A fork where {v['main']} splits into {v['left']} and {v['right']}."
    net = net_reply(desc, steps, nodes, edges)
    trips = [("bv1", "BV", first, "left_branch", 0.0), ("av", "AV", first, "left_branch", 6.0),
             ("bv2", "BV", first, "left_branch", 6.0), ("bv3", "BV", first, right_end, 8.0),
             ("bv4", "BV", first, right_end, 11.0)]
    trips = trips[1:4] if v["count"] == 3 else trips[:v["count"]]
    trips_text = trips_reply(
        "bv1 leads the AV toward the left branch, bv2 runs alongside it, and the remaining vehicles follow "
        "behind toward the right branch.", trips)
    net_replies = [net]
    if bad_net == "hash":
        broken = net.replace('id="left_branch"', 'id="#left_branch"')
        net_replies.insert(0, broken)
    trip_replies = [trips_text]
    if bad_trips:
        wrong = [(t[0], t[1], "left_branch" if t[0] == "av" else t[2], first if t[0] == "av" else t[3], t[4])
                 for t in trips]
        trip_replies.insert(0, trips_reply("The AV starts on the left branch and drives back to the main road.", wrong))
    return interp, net_replies, trip_replies, len(edges)


def fork_plain_reply():
    """The single network the net generator returns when it only sees the raw request."""
    nodes = [node("n0", -200, 0, "main road start"), node("n1", 0, 0, "fork"),
             node("n2", *polar((0, 0), 15, 200), "left end"), node("n3", *polar((0, 0), -15, 200), "right end")]
    edges = (two_way("n0", "n1", "e1", "e2", "Main Road", 2, 13.89, "toward the fork", "away from the fork")
             + two_way("n1", "n2", "e3", "e4", "Left Road", 1, 13.89, "outbound", "inbound")
             + two_way("n1", "n3", "e5", "e6", "Right Road", 1, 13.89, "outbound", "inbound"))
    net = net_reply("A road that forks into two.",
                    ["Use one junction for the fork and three road ends.",
                     "Make every road two-way."], nodes, edges)
    trips = trips_reply("Three vehicles head for the fork together.",
                        [("av", "AV", "e1", "e3", 2.0), ("bv1", "BV", "e1", "e3", 0.0), ("bv2", "BV", "e4", "e5", 1.0)])
    return net, trips


def offramp_reply():
    interp = interp_reply(
        "Pacific Freeway runs east with three lanes at 33.33 m/s. At Exit 12 a single-lane freeway off-ramp "
        "diverges to the right at a shallow angle, then curves right by about 40 degrees as it drops toward the "
        "surface street, with a 16.67 m/s advisory speed. Three vehicles: the AV exits, one car stays on the "
        "freeway next to it, and another car also takes the exit just ahead of the AV.",
        "The diverge area forces the AV to move into the exit lane while freeway traffic keeps its speed, and "
        "the slower car ahead on the curved ramp requires strong but smooth braking.",
        "ramp", 3, {"Pacific Freeway": 3, "Exit 12 off-ramp": 1})
    ramp = arc((0.0, 0.0), [-12, -22, -32, -42, -52], 40)
    nodes = [node("a", -400, 0, "freeway upstream"), node("d", 0, 0, "gore point of Exit 12"),
             node("b", 400, 0, "freeway downstream"), node("r", *ramp[-1], "end of the off-ramp")]
    edges = [edge("fwy_in", "a", "d", 3, 33.33, "Pacific Freeway", "Pacific Freeway eastbound before the exit"),
             edge("fwy_out", "d", "b", 3, 33.33, "Pacific Freeway", "Pacific Freeway eastbound after the exit"),
             edge("exit_ramp", "d", "r", 1, 16.67, "Exit 12 off-ramp", "Exit 12, curving right", shape=ramp)]
    net = net_reply(
        "A freeway off-ramp following the layout of the retrieved example: a straight three-lane freeway and a "
        "one-lane exit ramp that leaves at a small angle and curves right.",
        ["Split the freeway at the gore point d into an upstream and a downstream edge.",
         "Start the ramp 12 degrees right of the freeway and turn it a further 40 degrees over 200 m.",
         "Give the ramp an explicit shape so the curve is kept."],
        nodes, edges)
    trips = trips_reply(
        "bv2 takes the exit just ahead of the AV while bv1 continues on the freeway alongside.",
        [("bv2", "BV", "fwy_in", "exit_ramp", 0.0), ("av", "AV", "fwy_in", "exit_ramp", 2.0),
         ("bv1", "BV", "fwy_in", "fwy_out", 2.0)])
    return interp, net, trips


CRASH_REPORT = """\
Crash summary. The collision happened on Elm Street at its junction with Cedar Avenue, an
unsignalized four-way intersection. Elm Street runs east-west with two lanes in each direction
and a posted limit of 50 km/h. Cedar Avenue runs north-south with one lane each way and a limit
of 40 km/h. The weather was dry and it was daylight.

Vehicle 3, a blue hatchback, was eastbound on Elm Street and slowed to turn right onto
southbound Cedar Avenue. Vehicle 1, a grey sedan, was eastbound behind Vehicle 3 and braked for
it. Vehicle 2, a white pickup, was following Vehicle 1 in the same lane and could not stop in
time; its front hit the back of Vehicle 1, which was pushed forward into the back of Vehicle 3.
"""


def crash_replies():
    nodes, edges = four_way_scene(13.89, 11.11)
    net = net_reply(
        "The crash site is a four-way intersection of Elm Street (east-west, 2 lanes per direction, 50 km/h) and "
        "Cedar Avenue (north-south, 1 lane per direction, 40 km/h).",
        ["Convert the limits to m/s: 50 / 3.6 = 13.89 and 40 / 3.6 = 11.11.",
         "Place the intersection at the origin with 150 m approaches on every leg.",
         "Model each leg as a pair of one-way edges."],
        nodes, edges)
    trips = trips_reply(
        "All three vehicles travel east on Elm Street. Vehicle 3 leads and turns right onto southbound Cedar "
        "Avenue; Vehicle 1 follows it and Vehicle 2, the vehicle under test, follows Vehicle 1 closely.",
        [("vehicle3", "BV", "wc", "cs", 0.0), ("vehicle1", "BV", "wc", "ce", 2.0),
         ("vehicle2", "AV", "wc", "ce", 3.5)])
    return net, trips


# ---------------------------------------------------------------- RAG store


def rag_plans() -> dict[str, tuple[NetworkPlan, list[str]]]:
    def decl(nodes, edges):
        return NetworkPlan(
            tuple(NodeDecl(n[0], Point(n[1], n[2])) for n in nodes),
            tuple(EdgeDecl(e["id"], e["a"], e["b"], e["lanes"], e["speed"], e["name"],
                           tuple(Point(*p) for p in e["shape"]) if e["shape"] else None) for e in edges),
        )

    off = arc((0.0, 0.0), [-10, -20, -30, -40, -50], 35)
    offramp = decl(
        [("a", -300, 0), ("d", 0, 0), ("b", 300, 0), ("r", *off[-1])],
        [edge("main_in", "a", "d", 3, 33.33, "Interstate 5"), edge("main_out", "d", "b", 3, 33.33, "Interstate 5"),
         edge("exit", "d", "r", 1, 16.67, "Exit 42 off-ramp", shape=off)])
    on = arc((-170.0, -110.0), [50, 40, 30, 20, 10], 40)
    on[-1] = (0.0, 0.0)
    onramp = decl(
        [("a", -300, 0), ("d", 0, 0), ("b", 300, 0), ("r", *on[0])],
        [edge("main_in", "a", "d", 3, 33.33, "Interstate 5"), edge("main_out", "d", "b", 3, 33.33, "Interstate 5"),
         edge("entry", "r", "d", 1, 16.67, "Exit 43 on-ramp", shape=on)])
    _, _, _, t_nodes, t_edges = t_scene()
    t = decl([(n[0], n[1], n[2]) for n in t_nodes], t_edges)
    y_nodes = [("c", 0, 0), ("s", 0, -160), ("ne", 113.14, 113.14), ("nw", -113.14, 113.14)]
    y_edges = (two_way("s", "c", "sc", "cs", "Quarry Road", 2, 13.89, "", "")
               + two_way("c", "ne", "cne", "nec", "Orchard Way", 1, 11.11, "", "")
               + two_way("c", "nw", "cnw", "nwc", "Kiln Street", 1, 11.11, "", ""))
    y = decl(y_nodes, y_edges)
    f_nodes, f_edges = four_way_scene()
    four = decl([(n[0], n[1], n[2]) for n in f_nodes], f_edges)
    return {
        "offramp": (offramp, ["ramp", "freeway"]),
        "onramp": (onramp, ["ramp", "freeway"]),
        "t_junction": (t, ["intersection"]),
        "y_junction": (y, ["intersection"]),
        "four_way": (four, ["intersection"]),
    }


def build_rag() -> RagStore:
    rag_dir = FIX / "rag"
    shutil.rmtree(rag_dir, ignore_errors=True)
    (rag_dir / "nets").mkdir(parents=True)
    store = RagStore(rag_dir / "store.jsonl")
    for name, (plan, tags) in rag_plans().items():
        text = serialize_net(compile_plan(plan))
        (rag_dir / "nets" / f"{name}.net.xml").write_text(text, encoding="utf-8")
        ingest_net(store, text, name, tags)
    return store


# ------------------------------------------------------------- transcripts


def record(name: str, script: ScriptedLLM, *, mode="generate", request="", count=1, rag=False,
           use_interpreter=True, compile_check=True, report=None, store=None) -> None:
    tdir = TRANSCRIPTS / name
    shutil.rmtree(tdir, ignore_errors=True)
    tdir.mkdir(parents=True)
    backend = Backend(BackendConfig(mode="record", endpoint=ENDPOINT, transcript_dir=tdir),
                      transport=script.transport())
    with tempfile.TemporaryDirectory() as tmp:
        if mode == "crash":
            out = crash_report(report, backend, Path(tmp))
            ok = [out.success]
        else:
            cfg = RunConfig(request=request, out_dir=Path(tmp), backend=backend.cfg, count=count, rag=rag,
                            rag_db=FIX / "rag" / "store.jsonl" if rag else None, use_interpreter=use_interpreter,
                            compile_check=compile_check, challenge=False)
            summary = run_generate(cfg, backend=backend, store=store if rag else None)
            ok = [o.success for o in summary.outcomes]
    if script.pending():
        raise RuntimeError(f"{name}: unused scripted replies {script.pending()}")
    manifest = {"mode": mode, "request": request, "count": count, "rag": rag, "use_interpreter": use_interpreter}
    if report is not None:
        manifest["report_file"] = "crash_report.txt"
        (tdir / "crash_report.txt").write_text(report, encoding="utf-8")
    (tdir / "fixture.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"{name}: {sum(ok)}/{len(ok)} scenarios succeeded")


def build_transcripts(store: RagStore) -> None:
    shutil.rmtree(TRANSCRIPTS, ignore_errors=True)

    interp, net, trips, _, _ = t_scene()
    record("t_intersection", ScriptedLLM({"interpret": [interp], "net": [net], "vehicles": [trips]}),
           request="Generate a T-intersection scenario where the AV turns left from a side road.")

    interp, (bad, net), trips = y_scene()
    record("y_intersection", ScriptedLLM({"interpret": [interp], "net": [bad, net], "vehicles": [trips]}),
           request="Generate a Y-intersection scenario.")

    interp, net, trips = four_way_set()
    record("four_way", ScriptedLLM({"interpret": [interp], "net": [net], "vehicles": [trips]}),
           request="Generate a four-way intersection scenario.")

    interp, nets, trip_replies, _ = fork_scene(FORK_VARIANTS[0])
    record("fork", ScriptedLLM({"interpret": [interp], "net": nets, "vehicles": trip_replies}),
           request="Generate a scenario with a fork.")

    interp, net, trips = offramp_reply()
    record("off_ramp", ScriptedLLM({"interpret": [interp], "net": [net], "vehicles": [trips]}),
           request="Generate a freeway off-ramp scenario.", rag=True, store=store)

    for name, n in (("fork-3", 3), ("fork-5", 5), ("fork-10", 10)):
        script = ScriptedLLM()
        for i in range(n):
            interp, nets, trip_replies, _ = fork_scene(
                FORK_VARIANTS[i], bad_net="hash" if (n == 10 and i == 2) else None, bad_trips=(n == 10 and i == 6))
            script.push("interpret", interp)
            script.push("net", *nets)
            script.push("vehicles", *trip_replies)
        record(name, script, request=f"Generate {n} scenarios with a fork.", count=n)

    net, trips = fork_plain_reply()
    record("fork-5-no-interpreter", ScriptedLLM({"net": [net] * 5, "vehicles": [trips] * 5}),
           request="Generate 5 scenarios with a fork.", count=5, use_interpreter=False)

    interp, net, trips, t_nodes, t_edges = t_scene()
    dangling = net.replace('from="s" to="c" numLanes="1"', 'from="n5" to="c" numLanes="1"')
    assert dangling != net
    record("self-improve", ScriptedLLM({"interpret": [interp], "net": [dangling, net], "vehicles": [trips]}),
           request="Generate a T-intersection scenario.")

    late = trips_reply(
        "The background vehicles enter well after the AV has left.",
        [("av", "AV", "sc", "cw", 0.0), ("bv1", "BV", "wc", "ce", 40.0), ("bv2", "BV", "ec", "cw", 45.0),
         ("bv3", "BV", "sc", "ce", 50.0)])
    fail = verdict_reply(False, "bv1, bv2 and bv3 depart 40 s or more after the AV, so none of them is near the "
                                "junction when the AV turns. Make bv1 and bv2 reach Harbor Road's junction "
                                "within 2 s of the AV and keep bv3 right behind it.")
    record("evaluator-fail", ScriptedLLM({"interpret": [interp], "net": [net], "vehicles": [late, trips],
                                          "evaluate": [fail, verdict_reply(True, "bv1 and bv2 now force the AV to yield.")]}),
           request="Generate a T-intersection scenario where a vehicle forces the AV to yield.")

    interp, (bad, net), _ = y_scene()
    missing = net.replace('from="s" to="c"', 'from="s9" to="c"')
    zero = net.replace('numLanes="2"', 'numLanes="0"')
    record("exhausting", ScriptedLLM({"interpret": [interp], "net": [bad, missing, zero]}),
           request="Generate a Y-intersection scenario.")

    net, trips = crash_replies()
    record("crash-report", ScriptedLLM({"net": [net], "vehicles": [trips]}), mode="crash",
           request=CRASH_REPORT.strip(), report=CRASH_REPORT)


# ------------------------------------------------------------ crowded fork


def build_crowded_fork() -> None:
    d = FIX / "crowded_fork"
    shutil.rmtree(d, ignore_errors=True)
    d.mkdir(parents=True)
    left, right = polar((0, 0), 20, 200), polar((0, 0), -20, 200)
    plan = NetworkPlan(
        (NodeDecl("u", Point(-200, 0)), NodeDecl("c", Point(0, 0)), NodeDecl("l", Point(*left)),
         NodeDecl("r", Point(*right))),
        (EdgeDecl("main", "u", "c", 2, 13.89, "Harbour Road"), EdgeDecl("left", "c", "l", 1, 13.89, "North Spur"),
         EdgeDecl("right", "c", "r", 1, 13.89, "South Spur")),
    )
    net = compile_plan(plan)
    routes = [Route("bv1", ("main", "left"), 0.0), Route("av", ("main", "left"), 6.0, "AV"),
              Route("bv2", ("main", "left"), 6.0), Route("bv3", ("main", "right"), 8.0)]
    (d / "net.net.xml").write_text(serialize_net(net), encoding="utf-8")
    (d / "routes.rou.xml").write_text(serialize_routes(routes), encoding="utf-8")


def main() -> None:
    store = build_rag()
    build_transcripts(store)
    build_crowded_fork()


if __name__ == "__main__":
    main()
