"""Road-network data model and the XML file formats it travels in.

Plain-format input (``<nodes>``/``<edges>``, usually written by a language
model) is parsed strictly: anything outside the supported subset is reported
as a :class:`Diagnostic`.  Compiled ``<net>`` files may come from real SUMO
exports, so unsupported content there is skipped and listed in
``CompiledNetwork.warnings``.

All coordinates and speeds are written with two decimals; attribute order is
fixed so equal values always serialize to identical bytes.
"""
from __future__ import annotations

import enum
import math
import re
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

from .geometry import Point, polyline_length

XSI_NS = "{http://www.w3.org/2001/XMLSchema-instance}"

NODE_KINDS = ("priority", "traffic_light", "unregulated")
VEHICLE_KINDS = ("AV", "BV")
DIRECTIONS = ("s", "l", "r", "t")

_ID_RE = re.compile(r"^[^\s#:]+$")


class DiagCode(str, enum.Enum):
    UnknownNode = "UnknownNode"
    UnknownEdge = "UnknownEdge"
    UnknownLane = "UnknownLane"
    DuplicateId = "DuplicateId"
    BadAttribute = "BadAttribute"
    UnknownAttribute = "UnknownAttribute"
    FormatError = "FormatError"
    Unreachable = "Unreachable"
    TooShort = "TooShort"
    CountMismatch = "CountMismatch"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Diagnostic:
    code: DiagCode
    message: str
    subject: str

    def __post_init__(self):
        if not self.message:
            raise ValueError("diagnostic message must be nonempty")
        if self.subject and self.subject not in self.message:
            object.__setattr__(self, "message", f"{self.message} ('{self.subject}')")

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class DiagnosticError(ValueError):
    """Raised when input cannot be turned into a model value.

    ``response`` optionally carries the raw text the diagnostics refer to
    (an LLM reply, for instance) so callers can log it.
    """

    def __init__(self, diagnostics: Sequence[Diagnostic], response: str | None = None):
        self.diagnostics = list(diagnostics)
        self.response = response
        super().__init__("; ".join(str(d) for d in self.diagnostics))


def is_identifier(value: str) -> bool:
    return bool(value) and _ID_RE.match(value) is not None


# ---------------------------------------------------------------- plain model


@dataclass(frozen=True)
class NodeDecl:
    id: str
    pos: Point
    kind: str = "priority"
    comments: tuple[str, ...] = ()


@dataclass(frozen=True)
class EdgeDecl:
    id: str
    from_node: str
    to_node: str
    num_lanes: int = 1
    speed: float = 13.89
    name: str | None = None
    shape: tuple[Point, ...] | None = None
    comments: tuple[str, ...] = ()


@dataclass(frozen=True)
class NetworkPlan:
    nodes: tuple[NodeDecl, ...] = ()
    edges: tuple[EdgeDecl, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))


# ------------------------------------------------------------- compiled model


@dataclass(frozen=True)
class Lane:
    id: str
    index: int
    speed: float
    length: float
    shape: tuple[Point, ...]


@dataclass(frozen=True)
class CompiledEdge:
    id: str
    from_junction: str
    to_junction: str
    lanes: tuple[Lane, ...]
    name: str | None = None

    @property
    def num_lanes(self) -> int:
        return len(self.lanes)

    @property
    def speed(self) -> float:
        return self.lanes[0].speed

    @property
    def length(self) -> float:
        """Mean lane length."""
        return math.fsum(l.length for l in self.lanes) / len(self.lanes)


@dataclass(frozen=True)
class Connection:
    from_edge: str
    to_edge: str
    from_lane: int
    to_lane: int
    direction: str


@dataclass(frozen=True)
class Junction:
    id: str
    pos: Point
    kind: str
    incoming_lanes: tuple[str, ...] = ()
    shape: tuple[Point, ...] = ()


@dataclass(frozen=True)
class CompiledNetwork:
    edges: tuple[CompiledEdge, ...]
    junctions: tuple[Junction, ...]
    connections: tuple[Connection, ...]
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @cached_property
    def edge_map(self) -> dict[str, CompiledEdge]:
        return {e.id: e for e in self.edges}

    @cached_property
    def junction_map(self) -> dict[str, Junction]:
        return {j.id: j for j in self.junctions}

    @cached_property
    def lane_map(self) -> dict[str, Lane]:
        return {l.id: l for e in self.edges for l in e.lanes}

    @cached_property
    def successors(self) -> dict[str, tuple[str, ...]]:
        """Edge id -> distinct downstream edge ids, in connection order."""
        out: dict[str, list[str]] = {e.id: [] for e in self.edges}
        for c in self.connections:
            if c.to_edge not in out[c.from_edge]:
                out[c.from_edge].append(c.to_edge)
        return {k: tuple(v) for k, v in out.items()}

    def edge(self, edge_id: str) -> CompiledEdge:
        return self.edge_map[edge_id]

    def incoming(self, junction_id: str) -> list[CompiledEdge]:
        return [e for e in self.edges if e.to_junction == junction_id]

    def outgoing(self, junction_id: str) -> list[CompiledEdge]:
        return [e for e in self.edges if e.from_junction == junction_id]


@dataclass(frozen=True)
class NetworkStats:
    total_lanes: int
    total_edges: int
    total_edge_length: float


# ------------------------------------------------------------ vehicles/routes


@dataclass(frozen=True)
class Trip:
    vehicle_id: str
    vehicle_kind: str
    depart_edge: str
    arrive_edge: str
    depart_time: float


@dataclass(frozen=True)
class Route:
    vehicle_id: str
    edges: tuple[str, ...]
    depart_time: float
    vehicle_kind: str = "BV"

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))


@dataclass(frozen=True)
class VType:
    id: str
    accel: float
    decel: float
    length: float
    max_speed: float


DEFAULT_VTYPES = (
    VType("AV", 2.0, 3.0, 5.0, 55.56),
    VType("BV", 2.0, 3.0, 5.0, 55.56),
)


# ---------------------------------------------------------------- formatting


def fmt(value: float) -> str:
    s = f"{value:.2f}"
    return "0.00" if s == "-0.00" else s


def fmt_shape(pts: Iterable[Point]) -> str:
    return " ".join(f"{fmt(p.x)},{fmt(p.y)}" for p in pts)


def _as_written(pts: Iterable[Point]) -> tuple[Point, ...]:
    """The points a reader gets back from fmt_shape."""
    return tuple(Point(float(fmt(p.x)), float(fmt(p.y))) for p in pts)


def _attr(value: str) -> str:
    return escape(value, {'"': "&quot;"})


def _element(tag: str, attrs: Sequence[tuple[str, str]], indent: str, close: bool = True) -> str:
    body = " ".join(f'{k}="{_attr(v)}"' for k, v in attrs)
    return f"{indent}<{tag} {body}{'/' if close else ''}>"


def _comment_lines(comments: Iterable[str], indent: str) -> list[str]:
    return [f"{indent}<!--{c}-->" for c in comments]


# ------------------------------------------------------------------ parsing


def _parse_xml(text: str, what: str) -> ET.Element:
    parser = ET.XMLParser(target=ET.TreeBuilder(insert_comments=True))
    try:
        return ET.fromstring(text, parser=parser)
    except ET.ParseError as exc:
        line, col = exc.position
        raise DiagnosticError([Diagnostic(
            DiagCode.FormatError,
            f"{what} is not well-formed XML at line {line}, column {col}: {exc}",
            what,
        )]) from None


def _is_comment(el: ET.Element) -> bool:
    return el.tag is ET.Comment


class _Reader:
    """Collects diagnostics while reading attributes of one element."""

    def __init__(self, el: ET.Element, allowed: Sequence[str], diags: list[Diagnostic], strict: bool = True):
        self.el = el
        self.diags = diags
        self.subject = el.get("id") or el.tag
        if strict:
            for key in el.attrib:
                if key not in allowed:
                    name = key.replace(XSI_NS, "xsi:")
                    diags.append(Diagnostic(
                        DiagCode.UnknownAttribute,
                        f"unknown attribute '{name}' on <{el.tag}> '{self.subject}'; "
                        f"allowed attributes are {', '.join(allowed)}",
                        name,
                    ))

    def bad(self, key: str, value: str, why: str) -> None:
        self.diags.append(Diagnostic(
            DiagCode.BadAttribute,
            f"attribute {key}=\"{value}\" on <{self.el.tag}> '{self.subject}' {why}",
            value or self.subject,
        ))

    def required(self, key: str) -> str | None:
        value = self.el.get(key)
        if value is None:
            self.diags.append(Diagnostic(
                DiagCode.BadAttribute,
                f"<{self.el.tag}> '{self.subject}' is missing required attribute '{key}'",
                self.subject,
            ))
        return value

    def ident(self, key: str, required: bool = True) -> str | None:
        value = self.required(key) if required else self.el.get(key)
        if value is None:
            return None
        if not is_identifier(value):
            self.bad(key, value, "is not a valid identifier (nonempty, no whitespace, '#' or ':')")
            return None
        return value

    def number(self, key: str, required: bool = True, default: float | None = None) -> float | None:
        value = self.required(key) if required else self.el.get(key)
        if value is None:
            return default
        try:
            x = float(value)
        except ValueError:
            self.bad(key, value, "is not a number")
            return None
        if not math.isfinite(x):
            self.bad(key, value, "is not finite")
            return None
        return x

    def integer(self, key: str, required: bool = True) -> int | None:
        value = self.required(key) if required else self.el.get(key)
        if value is None:
            return None
        if not re.fullmatch(r"[+-]?\d+", value.strip()):
            self.bad(key, value, "is not an integer")
            return None
        return int(value)

    def shape(self, key: str) -> tuple[Point, ...] | None:
        value = self.el.get(key)
        if value is None:
            return None
        pts = parse_shape(value)
        if pts is None:
            self.bad(key, value, "must be a list of 'x,y' pairs separated by spaces")
        return pts


def parse_shape(value: str) -> tuple[Point, ...] | None:
    pts = []
    for token in value.split():
        parts = token.split(",")
        if len(parts) not in (2, 3):
            return None
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            return None
        if not (math.isfinite(x) and math.isfinite(y)):
            return None
        pts.append(Point(x, y))
    return tuple(pts)


def _check_root(root: ET.Element, tag: str, diags: list[Diagnostic], what: str) -> bool:
    if root.tag != tag:
        diags.append(Diagnostic(
            DiagCode.FormatError,
            f"{what} must have root element <{tag}>, found <{root.tag}>",
            str(root.tag),
        ))
        return False
    for key in root.attrib:
        if not key.startswith(XSI_NS):
            diags.append(Diagnostic(
                DiagCode.UnknownAttribute,
                f"unknown attribute '{key}' on root element <{tag}>",
                key,
            ))
    return True


def _children(root: ET.Element, tag: str, diags: list[Diagnostic], what: str):
    """Yield (element, preceding comments); unknown elements become diagnostics."""
    pending: list[str] = []
    for child in root:
        if _is_comment(child):
            pending.append(child.text or "")
            continue
        if child.tag != tag:
            diags.append(Diagnostic(
                DiagCode.FormatError,
                f"unexpected element <{child.tag}> in {what}; only <{tag}> is allowed",
                str(child.tag),
            ))
            pending = []
            continue
        yield child, tuple(pending)
        pending = []


def _parse_nodes(text: str, diags: list[Diagnostic]) -> list[NodeDecl]:
    root = _parse_xml(text, "node file")
    nodes: list[NodeDecl] = []
    if not _check_root(root, "nodes", diags, "node file"):
        return nodes
    seen: set[str] = set()
    for el, comments in _children(root, "node", diags, "node file"):
        r = _Reader(el, ("id", "x", "y", "type"), diags)
        nid = r.ident("id")
        x = r.number("x")
        y = r.number("y")
        kind = el.get("type", "priority")
        if kind not in NODE_KINDS:
            r.bad("type", kind, f"must be one of {', '.join(NODE_KINDS)}")
            kind = None
        if nid is not None and nid in seen:
            diags.append(Diagnostic(DiagCode.DuplicateId, f"node id '{nid}' is declared more than once", nid))
            continue
        if nid is None or x is None or y is None or kind is None:
            continue
        seen.add(nid)
        nodes.append(NodeDecl(nid, Point(x, y), kind, comments))
    return nodes


def _parse_edges(text: str, diags: list[Diagnostic]) -> list[EdgeDecl]:
    root = _parse_xml(text, "edge file")
    edges: list[EdgeDecl] = []
    if not _check_root(root, "edges", diags, "edge file"):
        return edges
    seen: set[str] = set()
    for el, comments in _children(root, "edge", diags, "edge file"):
        r = _Reader(el, ("id", "from", "to", "numLanes", "speed", "name", "shape"), diags)
        before = len(diags)
        eid = r.ident("id")
        frm = r.ident("from")
        to = r.ident("to")
        lanes = r.integer("numLanes")
        speed = r.number("speed")
        shape = r.shape("shape")
        name = el.get("name")
        if eid is not None and eid in seen:
            diags.append(Diagnostic(DiagCode.DuplicateId, f"edge id '{eid}' is declared more than once", eid))
            continue
        if len(diags) > before or None in (eid, frm, to, lanes, speed):
            continue
        seen.add(eid)
        edges.append(EdgeDecl(eid, frm, to, lanes, speed, name, shape, comments))
    return edges


def parse_plain(node_text: str, edge_text: str) -> NetworkPlan:
    """Parse a node/edge file pair; raises :class:`DiagnosticError` listing every problem."""
    diags: list[Diagnostic] = []
    nodes: list[NodeDecl] = []
    edges: list[EdgeDecl] = []
    try:
        nodes = _parse_nodes(node_text, diags)
    except DiagnosticError as exc:
        diags.extend(exc.diagnostics)
    try:
        edges = _parse_edges(edge_text, diags)
    except DiagnosticError as exc:
        diags.extend(exc.diagnostics)
    if diags:
        raise DiagnosticError(diags)
    return NetworkPlan(tuple(nodes), tuple(edges))


def serialize_plain(plan: NetworkPlan) -> tuple[str, str]:
    if plan.nodes:
        lines = ["<nodes>"]
        for n in plan.nodes:
            lines += _comment_lines(n.comments, "    ")
            lines.append(_element("node", [
                ("id", n.id), ("x", fmt(n.pos.x)), ("y", fmt(n.pos.y)), ("type", n.kind),
            ], "    "))
        lines.append("</nodes>")
        node_text = "\n".join(lines) + "\n"
    else:
        node_text = "<nodes/>\n"
    if plan.edges:
        lines = ["<edges>"]
        for e in plan.edges:
            attrs = [
                ("id", e.id), ("from", e.from_node), ("to", e.to_node),
                ("numLanes", str(e.num_lanes)), ("speed", fmt(e.speed)),
            ]
            if e.name is not None:
                attrs.append(("name", e.name))
            if e.shape is not None:
                attrs.append(("shape", fmt_shape(e.shape)))
            lines += _comment_lines(e.comments, "    ")
            lines.append(_element("edge", attrs, "    "))
        lines.append("</edges>")
        edge_text = "\n".join(lines) + "\n"
    else:
        edge_text = "<edges/>\n"
    return node_text, edge_text


# -------------------------------------------------------------------- net


def parse_net(net_text: str) -> CompiledNetwork:
    """Parse a compiled net file (ours or a SUMO export).

    Internal edges/junctions and elements outside the supported subset are
    skipped; the skips are summarized in ``warnings``.
    """
    root = _parse_xml(net_text, "net file")
    diags: list[Diagnostic] = []
    if root.tag != "net":
        raise DiagnosticError([Diagnostic(
            DiagCode.FormatError, f"net file must have root element <net>, found <{root.tag}>", str(root.tag),
        )])
    skipped: Counter[str] = Counter()
    edges: list[CompiledEdge] = []
    junctions: list[Junction] = []
    raw_connections: list[ET.Element] = []
    for el in root:
        if _is_comment(el):
            continue
        if el.tag == "edge":
            if el.get("function", "normal") != "normal":
                skipped[f"{el.get('function')} edge"] += 1
                continue
            edge = _read_net_edge(el, diags, skipped)
            if edge is not None:
                edges.append(edge)
        elif el.tag == "junction":
            if el.get("type") == "internal":
                skipped["internal junction"] += 1
                continue
            r = _Reader(el, (), diags, strict=False)
            jid = r.required("id")
            x, y = r.number("x"), r.number("y")
            shape = r.shape("shape") or ()
            if shape and shape[0] != shape[-1]:
                shape = shape + (shape[0],)
            inc = tuple((el.get("incLanes") or "").split())
            if jid is not None and x is not None and y is not None:
                junctions.append(Junction(jid, Point(x, y), el.get("type", "priority"), inc, shape))
        elif el.tag == "connection":
            raw_connections.append(el)
        else:
            skipped[f"<{el.tag}> element"] += 1

    jmap = {j.id: j for j in junctions}
    emap = {e.id: e for e in edges}
    seen_edges: set[str] = set()
    for e in edges:
        if e.id in seen_edges:
            diags.append(Diagnostic(DiagCode.DuplicateId, f"edge id '{e.id}' appears more than once", e.id))
        seen_edges.add(e.id)
        for jid in (e.from_junction, e.to_junction):
            if jid not in jmap:
                diags.append(Diagnostic(
                    DiagCode.UnknownNode, f"edge '{e.id}' references unknown junction '{jid}'", jid,
                ))
    lane_ids = {l.id for e in edges for l in e.lanes}
    junctions = [
        Junction(j.id, j.pos, j.kind, tuple(l for l in j.incoming_lanes if l in lane_ids), j.shape)
        for j in junctions
    ]
    connections: list[Connection] = []
    for el in raw_connections:
        frm, to = el.get("from", ""), el.get("to", "")
        if frm.startswith(":") or to.startswith(":"):
            skipped["internal connection"] += 1
            continue
        r = _Reader(el, (), diags, strict=False)
        fl, tl = r.integer("fromLane"), r.integer("toLane")
        if fl is None or tl is None:
            continue
        bad = False
        for eid in (frm, to):
            if eid not in emap:
                diags.append(Diagnostic(
                    DiagCode.UnknownEdge, f"connection {frm}->{to} references unknown edge '{eid}'", eid or "?",
                ))
                bad = True
        if bad:
            continue
        for eid, idx in ((frm, fl), (to, tl)):
            if not 0 <= idx < emap[eid].num_lanes:
                lane_id = f"{eid}_{idx}"
                diags.append(Diagnostic(
                    DiagCode.UnknownLane,
                    f"connection {frm}->{to} references an unknown lane '{lane_id}' "
                    f"(edge '{eid}' has {emap[eid].num_lanes} lanes)",
                    lane_id,
                ))
                bad = True
        if emap[frm].to_junction != emap[to].from_junction:
            diags.append(Diagnostic(
                DiagCode.BadAttribute,
                f"connection {frm}->{to} joins edges that do not meet at a junction",
                f"{frm}->{to}",
            ))
            bad = True
        direction = el.get("dir", "s")
        if direction not in DIRECTIONS:
            skipped[f"connection dir '{direction}' treated as 's'"] += 1
            direction = "s"
        if not bad:
            connections.append(Connection(frm, to, fl, tl, direction))
    if diags:
        raise DiagnosticError(diags)
    if not edges:
        raise DiagnosticError([Diagnostic(DiagCode.FormatError, "net file contains no edges", "net")])
    warnings = tuple(f"ignored {n} x {what}" for what, n in sorted(skipped.items()))
    return CompiledNetwork(tuple(edges), tuple(junctions), tuple(connections), warnings)


def _read_net_edge(el: ET.Element, diags: list[Diagnostic], skipped: Counter) -> CompiledEdge | None:
    r = _Reader(el, (), diags, strict=False)
    eid = r.required("id")
    frm = r.required("from")
    to = r.required("to")
    lanes: list[Lane] = []
    for child in el:
        if _is_comment(child):
            continue
        if child.tag != "lane":
            skipped[f"<{child.tag}> in edge"] += 1
            continue
        lr = _Reader(child, (), diags, strict=False)
        lid = lr.required("id")
        index = lr.integer("index")
        speed = lr.number("speed")
        if child.get("shape") is None:
            lr.bad("shape", "", "is missing; every lane needs a shape")
            continue
        shape = lr.shape("shape")
        if None in (lid, index, speed) or not shape or len(shape) < 2:
            continue
        length = polyline_length(shape)
        declared = lr.number("length", required=False)
        if declared is not None and abs(declared - length) > 0.1:
            skipped["lane length differing from its shape (shape used)"] += 1
        lanes.append(Lane(lid, index, speed, length, shape))
    if eid is None or frm is None or to is None:
        return None
    if not lanes:
        diags.append(Diagnostic(DiagCode.FormatError, f"edge '{eid}' has no usable <lane> children", eid))
        return None
    lanes.sort(key=lambda l: l.index)
    return CompiledEdge(eid, frm, to, tuple(lanes), el.get("name"))


def serialize_net(net: CompiledNetwork) -> str:
    lines = ['<net version="1.20">']
    for e in net.edges:
        attrs = [("id", e.id), ("from", e.from_junction), ("to", e.to_junction)]
        if e.name is not None:
            attrs.append(("name", e.name))
        lines.append(_element("edge", attrs, "    ", close=False))
        for lane in e.lanes:
            lines.append(_element("lane", [
                ("id", lane.id), ("index", str(lane.index)), ("speed", fmt(lane.speed)),
                ("length", fmt(polyline_length(_as_written(lane.shape)))), ("shape", fmt_shape(lane.shape)),
            ], "        "))
        lines.append("    </edge>")
    for j in net.junctions:
        lines.append(_element("junction", [
            ("id", j.id), ("type", j.kind), ("x", fmt(j.pos.x)), ("y", fmt(j.pos.y)),
            ("incLanes", " ".join(j.incoming_lanes)), ("shape", fmt_shape(j.shape)),
        ], "    "))
    for c in net.connections:
        lines.append(_element("connection", [
            ("from", c.from_edge), ("to", c.to_edge), ("fromLane", str(c.from_lane)),
            ("toLane", str(c.to_lane)), ("dir", c.direction),
        ], "    "))
    lines.append("</net>")
    return "\n".join(lines) + "\n"


def network_stats(net: CompiledNetwork) -> NetworkStats:
    return NetworkStats(
        total_lanes=sum(e.num_lanes for e in net.edges),
        total_edges=len(net.edges),
        total_edge_length=math.fsum(e.length for e in net.edges),
    )


# ------------------------------------------------------------ trips/routes


def parse_trips(text: str) -> list[Trip]:
    root = _parse_xml(text, "trip file")
    diags: list[Diagnostic] = []
    trips: list[Trip] = []
    if not _check_root(root, "trips", diags, "trip file"):
        raise DiagnosticError(diags)
    seen: set[str] = set()
    for el, _ in _children(root, "trip", diags, "trip file"):
        r = _Reader(el, ("id", "type", "from", "to", "depart"), diags)
        before = len(diags)
        vid = r.ident("id")
        kind = r.required("type")
        if kind is not None and kind not in VEHICLE_KINDS:
            r.bad("type", kind, "must be AV or BV")
        frm = r.ident("from")
        to = r.ident("to")
        depart = r.number("depart")
        if depart is not None and depart < 0:
            r.bad("depart", el.get("depart", ""), "must be >= 0")
        if vid is not None and vid in seen:
            diags.append(Diagnostic(DiagCode.DuplicateId, f"vehicle id '{vid}' is used by more than one trip", vid))
            continue
        if len(diags) > before:
            continue
        seen.add(vid)
        trips.append(Trip(vid, kind, frm, to, depart))
    if diags:
        raise DiagnosticError(diags)
    return trips


def serialize_trips(trips: Sequence[Trip]) -> str:
    if not trips:
        return "<trips/>\n"
    lines = ["<trips>"]
    for t in trips:
        lines.append(_element("trip", [
            ("id", t.vehicle_id), ("type", t.vehicle_kind), ("from", t.depart_edge),
            ("to", t.arrive_edge), ("depart", fmt(t.depart_time)),
        ], "    "))
    lines.append("</trips>")
    return "\n".join(lines) + "\n"


def parse_routes(text: str) -> list[Route]:
    root = _parse_xml(text, "route file")
    diags: list[Diagnostic] = []
    if not _check_root(root, "routes", diags, "route file"):
        raise DiagnosticError(diags)
    routes: list[Route] = []
    for el in root:
        if _is_comment(el) or el.tag == "vType":
            continue
        if el.tag != "vehicle":
            diags.append(Diagnostic(DiagCode.FormatError, f"unexpected element <{el.tag}> in route file", str(el.tag)))
            continue
        r = _Reader(el, ("id", "type", "depart"), diags)
        vid = r.ident("id")
        kind = el.get("type", "BV")
        depart = r.number("depart")
        route_el = el.find("route")
        if route_el is None or not (route_el.get("edges") or "").split():
            diags.append(Diagnostic(DiagCode.FormatError, f"vehicle '{vid}' has no <route edges=...>", vid or "?"))
            continue
        if vid is None or depart is None:
            continue
        routes.append(Route(vid, tuple(route_el.get("edges").split()), depart, kind))
    if diags:
        raise DiagnosticError(diags)
    return routes


def serialize_routes(routes: Sequence[Route], vtypes: Sequence[VType] = DEFAULT_VTYPES) -> str:
    lines = ["<routes>"]
    for vt in vtypes:
        lines.append(_element("vType", [
            ("id", vt.id), ("accel", fmt(vt.accel)), ("decel", fmt(vt.decel)),
            ("length", fmt(vt.length)), ("maxSpeed", fmt(vt.max_speed)),
        ], "    "))
    for r in routes:
        lines.append(_element("vehicle", [
            ("id", r.vehicle_id), ("type", r.vehicle_kind), ("depart", fmt(r.depart_time)),
        ], "    ", close=False))
        lines.append(_element("route", [("edges", " ".join(r.edges))], "        "))
        lines.append("    </vehicle>")
    lines.append("</routes>")
    return "\n".join(lines) + "\n"


def serialize_sumocfg(net_file: str, route_file: str, begin: float = 0.0, end: float = 120.0) -> str:
    return (
        "<configuration>\n"
        "    <input>\n"
        f'        <net-file value="{_attr(net_file)}"/>\n'
        f'        <route-files value="{_attr(route_file)}"/>\n'
        "    </input>\n"
        "    <time>\n"
        f'        <begin value="{fmt(begin)}"/>\n'
        f'        <end value="{fmt(end)}"/>\n'
        "    </time>\n"
        "</configuration>\n"
    )


def parse_sumocfg(text: str) -> dict[str, str]:
    root = _parse_xml(text, "sumocfg")
    if root.tag != "configuration":
        raise DiagnosticError([Diagnostic(DiagCode.FormatError, "sumocfg root must be <configuration>", str(root.tag))])
    out = {}
    for path in ("input/net-file", "input/route-files", "time/begin", "time/end"):
        el = root.find(path)
        if el is None or el.get("value") is None:
            raise DiagnosticError([Diagnostic(DiagCode.FormatError, f"sumocfg lacks {path}", path)])
        out[path.split("/")[1]] = el.get("value")
    return out
