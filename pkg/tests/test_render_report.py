import xml.etree.ElementTree as ET

import pytest

from conftest import FIXTURES, replay
from scenoforge.compiler import compile as compile_plan
from scenoforge.geometry import Point
from scenoforge.net_model import EdgeDecl, NetworkPlan, NodeDecl, parse_net
from scenoforge.render import render_svg, render_svg_text
from scenoforge.report import load_results, render_figures, text_report

SVG = "{http://www.w3.org/2000/svg}"


def census(svg_text: str) -> dict[str, int]:
    root = ET.fromstring(svg_text)
    out: dict[str, int] = {}
    for el in root.iter():
        tag = el.tag.replace(SVG, "")
        out[tag] = out.get(tag, 0) + 1
    return out


def test_single_edge_one_polyline_per_lane():
    plan = NetworkPlan((NodeDecl("a", Point(0, 0)), NodeDecl("b", Point(80, 0))), (EdgeDecl("e", "a", "b", 3),))
    c = census(render_svg_text(compile_plan(plan)))
    assert c["polyline"] == 3 and c["text"] == 1


def test_t_fixture_census():
    net = parse_net((FIXTURES / "rag" / "nets" / "t_junction.net.xml").read_text())
    c = census(render_svg_text(net))
    shaped = sum(1 for j in net.junctions if j.shape)
    assert len(net.junctions) == 4
    assert c.get("polygon", 0) == shaped and c.get("circle", 0) == len(net.junctions) - shaped
    assert c["polyline"] == sum(e.num_lanes for e in net.edges)
    assert c["text"] == len(net.edges)


def test_render_deterministic(tmp_path):
    net = parse_net((FIXTURES / "rag" / "nets" / "four_way.net.xml").read_text())
    a = render_svg(net, tmp_path / "a.svg").read_bytes()
    b = render_svg(net, tmp_path / "b.svg").read_bytes()
    assert a == b


def test_lane_stroke_matches_width():
    net = parse_net((FIXTURES / "rag" / "nets" / "t_junction.net.xml").read_text())
    root = ET.fromstring(render_svg_text(net, lane_width=3.2))
    widths = {el.get("stroke-width") for el in root.iter(f"{SVG}polyline")}
    assert widths == {"6.40"}


@pytest.fixture(scope="module")
def results(tmp_path_factory):
    d = tmp_path_factory.mktemp("fork3")
    replay("fork-3", d)
    return d


def test_text_report_tables(results):
    r = load_results(results)
    text = text_report(r)
    for title in ("Conformity of command", "Diversity of generated scenarios", "Challenge of generated scenarios"):
        assert title in text
    assert "RandomTrip" in text and "use time (s, simulated)" in text
    assert (results / "report.txt").read_text() == text
    two = text_report([("a", r), ("b", r)])
    assert "a RandomTrip" in two


def test_figures_written(results, tmp_path):
    paths = render_figures([("fork-3", load_results(results / "results.json"))], tmp_path)
    assert [p.name for p in paths] == ["networks.png", "challenge.png"]
    assert all(p.read_bytes()[:4] == b"\x89PNG" for p in paths)


def test_csv_rows(results):
    lines = (results / "scenarios.csv").read_text().splitlines()
    assert lines[0].startswith("index,success,first_pass_ok")
    assert len(lines) == 4
