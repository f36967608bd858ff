"""Compile a declarative node/edge plan into a routable road network."""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

from .geometry import (
    Point, dist, end_heading, expanded_hull, offset_polyline, polyline_length,
    signed_delta, start_heading,
)
from .net_model import (
    NODE_KINDS, CompiledEdge, CompiledNetwork, Connection, DiagCode, Diagnostic,
    DiagnosticError, EdgeDecl, Junction, Lane, NetworkPlan, NodeDecl, is_identifier,
)


@dataclass(frozen=True)
class CompileOptions:
    lane_width: float = 3.2
    min_edge_length: float = 5.0
    straight_threshold_deg: float = 30.0
    uturn_threshold_deg: float = 150.0
    ramp_min_speed: float = 25.0

    def __post_init__(self):
        if not 0 < self.straight_threshold_deg < self.uturn_threshold_deg < 180:
            raise ValueError("need 0 < straight_threshold_deg < uturn_threshold_deg < 180")
        if self.lane_width <= 0:
            raise ValueError("lane_width must be positive")
        if self.min_edge_length < 0:
            raise ValueError("min_edge_length must be >= 0")


DEFAULT_OPTIONS = CompileOptions()


class SceneType(str, enum.Enum):
    t_intersection = "t_intersection"
    y_intersection = "y_intersection"
    four_way = "four_way"
    fork = "fork"
    merge = "merge"
    ramp = "ramp"
    general = "general"

    def __str__(self) -> str:
        return self.value


def _centerline(edge: EdgeDecl, nodes: dict[str, NodeDecl]) -> tuple[Point, ...]:
    if edge.shape is not None:
        return tuple(edge.shape)
    return (nodes[edge.from_node].pos, nodes[edge.to_node].pos)


def validate(plan: NetworkPlan, opts: CompileOptions = DEFAULT_OPTIONS) -> list[Diagnostic]:
    """Every reason the plan cannot be compiled; empty when it can."""
    diags: list[Diagnostic] = []
    nodes: dict[str, NodeDecl] = {}
    for n in plan.nodes:
        if not is_identifier(n.id):
            diags.append(Diagnostic(DiagCode.BadAttribute, f"node id '{n.id}' is not a valid identifier", n.id or "?"))
        if n.id in nodes:
            diags.append(Diagnostic(DiagCode.DuplicateId, f"node id '{n.id}' is declared more than once", n.id))
            continue
        if n.kind not in NODE_KINDS:
            diags.append(Diagnostic(DiagCode.BadAttribute, f"node '{n.id}' has unsupported type '{n.kind}'", n.id))
        if not (math.isfinite(n.pos.x) and math.isfinite(n.pos.y)):
            diags.append(Diagnostic(DiagCode.BadAttribute, f"node '{n.id}' has non-finite coordinates", n.id))
        nodes[n.id] = n
    seen: set[str] = set()
    for e in plan.edges:
        if not is_identifier(e.id):
            diags.append(Diagnostic(DiagCode.BadAttribute, f"edge id '{e.id}' is not a valid identifier", e.id or "?"))
        if e.id in seen:
            diags.append(Diagnostic(DiagCode.DuplicateId, f"edge id '{e.id}' is declared more than once", e.id))
        seen.add(e.id)
        ends_ok = True
        for end, nid in (("from", e.from_node), ("to", e.to_node)):
            if nid not in nodes:
                diags.append(Diagnostic(
                    DiagCode.UnknownNode,
                    f"edge '{e.id}' {end}-node '{nid}' is not declared in the node file",
                    nid,
                ))
                ends_ok = False
        if e.from_node == e.to_node:
            diags.append(Diagnostic(
                DiagCode.BadAttribute, f"edge '{e.id}' starts and ends at the same node '{e.from_node}'", e.id,
            ))
            ends_ok = False
        if e.num_lanes < 1:
            diags.append(Diagnostic(
                DiagCode.BadAttribute, f"edge '{e.id}' has numLanes={e.num_lanes}; at least 1 lane is required", e.id,
            ))
        if not (math.isfinite(e.speed) and e.speed > 0):
            diags.append(Diagnostic(
                DiagCode.BadAttribute, f"edge '{e.id}' has speed={e.speed}; speed must be > 0 m/s", e.id,
            ))
        if e.shape is not None and len(e.shape) < 2:
            diags.append(Diagnostic(DiagCode.BadAttribute, f"edge '{e.id}' shape needs at least 2 points", e.id))
            ends_ok = False
        if ends_ok:
            length = polyline_length(_centerline(e, nodes))
            if length < opts.min_edge_length or length == 0:
                diags.append(Diagnostic(
                    DiagCode.TooShort,
                    f"edge '{e.id}' is {length:.2f} m long; edges must be at least {opts.min_edge_length:.2f} m",
                    e.id,
                ))
    return diags


def classify_direction(in_heading: float, out_heading: float, opts: CompileOptions = DEFAULT_OPTIONS) -> str:
    delta = signed_delta(in_heading, out_heading)
    if abs(delta) <= opts.straight_threshold_deg:
        return "s"
    if opts.straight_threshold_deg < delta <= opts.uturn_threshold_deg:
        return "l"
    if -opts.uturn_threshold_deg <= delta < -opts.straight_threshold_deg:
        return "r"
    return "t"


def is_reverse(a: CompiledEdge | EdgeDecl, b: CompiledEdge | EdgeDecl) -> bool:
    af, at = _ends(a)
    bf, bt = _ends(b)
    return af == bt and at == bf


def _ends(e) -> tuple[str, str]:
    if isinstance(e, EdgeDecl):
        return e.from_node, e.to_node
    return e.from_junction, e.to_junction


def compile(plan: NetworkPlan, opts: CompileOptions = DEFAULT_OPTIONS) -> CompiledNetwork:  # noqa: A001
    """Build lanes, junctions and connections; raises DiagnosticError on an invalid plan."""
    diags = validate(plan, opts)
    if diags:
        raise DiagnosticError(diags)
    nodes = {n.id: n for n in plan.nodes}
    w = opts.lane_width

    edges: list[CompiledEdge] = []
    for e in plan.edges:
        center = _centerline(e, nodes)
        lanes = []
        for i in range(e.num_lanes):
            shape = tuple(offset_polyline(center, (i + 0.5) * w))
            lanes.append(Lane(f"{e.id}_{i}", i, e.speed, polyline_length(shape), shape))
        edges.append(CompiledEdge(e.id, e.from_node, e.to_node, tuple(lanes), e.name))

    referenced = {e.from_junction for e in edges} | {e.to_junction for e in edges}
    warnings = tuple(
        f"node '{n.id}' is not used by any edge and was dropped" for n in plan.nodes if n.id not in referenced
    )

    connections: list[Connection] = []
    for inc in edges:
        outs = [o for o in edges if o.from_junction == inc.to_junction]
        candidates = [o for o in outs if not is_reverse(inc, o)]
        if not candidates and any(
            e is not inc and not is_reverse(inc, e) for e in edges if e.to_junction == inc.to_junction
        ):
            # U-turn only where other roads meet; a lone two-way road end stays a dead end
            candidates = outs
        h_in = end_heading(inc.lanes[0].shape)
        for out in candidates:
            direction = classify_direction(h_in, start_heading(out.lanes[0].shape), opts)
            for lane in inc.lanes:
                connections.append(Connection(inc.id, out.id, lane.index, min(lane.index, out.num_lanes - 1), direction))

    with_conn = {c.from_edge for c in connections}
    junctions = []
    for n in plan.nodes:
        if n.id not in referenced:
            continue
        inc = [e for e in edges if e.to_junction == n.id]
        out = [e for e in edges if e.from_junction == n.id]
        inc_lanes = tuple(l.id for e in inc for l in e.lanes)
        if not any(e.id in with_conn for e in inc):
            junctions.append(Junction(n.id, n.pos, "dead_end", inc_lanes, ()))
            continue
        pts = [l.shape[-1] for e in inc for l in e.lanes] + [l.shape[0] for e in out for l in e.lanes]
        junctions.append(Junction(n.id, n.pos, n.kind, inc_lanes, tuple(expanded_hull(pts, w / 2))))

    return CompiledNetwork(tuple(edges), tuple(junctions), tuple(connections), warnings)


def plan_from_network(net: CompiledNetwork, lane_width: float = DEFAULT_OPTIONS.lane_width) -> NetworkPlan:
    """Reconstruct a node/edge plan whose compilation reproduces the network's topology."""
    nodes = []
    for j in net.junctions:
        kind = j.kind if j.kind in NODE_KINDS else "priority"
        nodes.append(NodeDecl(j.id, j.pos, kind))
    jpos = {j.id: j.pos for j in net.junctions}
    edges = []
    for e in net.edges:
        center = offset_polyline(e.lanes[0].shape, -0.5 * lane_width)
        shape = None
        straight = len(center) == 2 and dist(center[0], jpos[e.from_junction]) < 0.01 \
            and dist(center[1], jpos[e.to_junction]) < 0.01
        if not straight:
            shape = tuple(Point(round(p.x, 2), round(p.y, 2)) for p in center)
        edges.append(EdgeDecl(e.id, e.from_junction, e.to_junction, e.num_lanes, e.speed, e.name, shape))
    return NetworkPlan(tuple(nodes), tuple(edges))


# --------------------------------------------------------- scene taxonomy


@dataclass(frozen=True)
class _Road:
    incoming: CompiledEdge | None
    outgoing: CompiledEdge | None

    @property
    def paired(self) -> bool:
        return self.incoming is not None and self.outgoing is not None

    @property
    def away_heading(self) -> float:
        if self.outgoing is not None:
            return start_heading(self.outgoing.lanes[0].shape)
        return (end_heading(self.incoming.lanes[0].shape) + 180.0) % 360.0

    @property
    def weight(self) -> float:
        return max(e.speed * e.num_lanes for e in (self.incoming, self.outgoing) if e is not None)


def junction_roads(net: CompiledNetwork, junction_id: str) -> list[_Road]:
    """Incident roads, where an approach/exit pair of mutually reverse edges is one road."""
    inc = net.incoming(junction_id)
    out = net.outgoing(junction_id)
    roads = []
    used: set[str] = set()
    for i in inc:
        partner = next((o for o in out if o.id not in used and is_reverse(i, o)), None)
        if partner is not None:
            used.add(partner.id)
        roads.append(_Road(i, partner))
    roads.extend(_Road(None, o) for o in out if o.id not in used)
    return roads


def _fork_or_merge(roads: list[_Road], opts: CompileOptions) -> SceneType | None:
    ins = [r.incoming for r in roads if r.incoming is not None]
    outs = [r.outgoing for r in roads if r.outgoing is not None]
    if len(ins) == 1 and len(outs) == 2:
        main = ins[0]
        ref = end_heading(main.lanes[0].shape)
        ranked = sorted(
            enumerate(outs),
            key=lambda io: (abs(signed_delta(ref, start_heading(io[1].lanes[0].shape))),
                            -io[1].speed * io[1].num_lanes, io[0]),
        )
        major, minor = ranked[0][1], ranked[1][1]
        angle = abs(signed_delta(start_heading(major.lanes[0].shape), start_heading(minor.lanes[0].shape)))
        base = SceneType.fork
    elif len(ins) == 2 and len(outs) == 1:
        main = outs[0]
        ref = start_heading(main.lanes[0].shape)
        ranked = sorted(
            enumerate(ins),
            key=lambda io: (abs(signed_delta(end_heading(io[1].lanes[0].shape), ref)),
                            -io[1].speed * io[1].num_lanes, io[0]),
        )
        major, minor = ranked[0][1], ranked[1][1]
        angle = abs(signed_delta(end_heading(major.lanes[0].shape), end_heading(minor.lanes[0].shape)))
        base = SceneType.merge
    else:
        return None
    major_speed = min(main.speed, major.speed)
    if angle < opts.straight_threshold_deg and major_speed >= opts.ramp_min_speed:
        return SceneType.ramp
    return base


def classify_scene(net: CompiledNetwork, opts: CompileOptions = DEFAULT_OPTIONS) -> SceneType:
    best: list[_Road] = []
    for j in net.junctions:
        roads = junction_roads(net, j.id)
        if len(roads) > len(best):
            best = roads
    if not best:
        return SceneType.general
    if not any(r.paired for r in best):
        special = _fork_or_merge(best, opts)
        if special is not None:
            return special
    degree = len(best)
    if degree >= 4:
        return SceneType.four_way
    if degree == 3:
        limit = 180.0 - opts.straight_threshold_deg
        for a, b in itertools.combinations(best, 2):
            if abs(signed_delta(a.away_heading, b.away_heading)) >= limit:
                return SceneType.t_intersection
        return SceneType.y_intersection
    return SceneType.general


# ---------------------------------------------------------------- feedback


_INSTRUCTIONS = {
    DiagCode.UnknownNode: "declare the node or fix the edge endpoint so that every edge joins declared nodes.",
    DiagCode.UnknownEdge: "use only edge ids that exist in the generated network.",
    DiagCode.UnknownLane: "use lane indices between 0 and numLanes-1 of the referenced edge.",
    DiagCode.DuplicateId: "give every node, edge and vehicle a unique id.",
    DiagCode.BadAttribute: "correct the attribute value; ids must not contain whitespace, '#' or ':'.",
    DiagCode.UnknownAttribute: "remove the attribute; use only the attributes shown in the output format.",
    DiagCode.FormatError: "return exactly the requested fenced blocks containing well-formed XML.",
    DiagCode.Unreachable: "pick connected edges so the destination is downstream of the origin in the network summary.",
    DiagCode.TooShort: "move the nodes further apart so the edge is long enough.",
    DiagCode.CountMismatch: "generate exactly the requested number of vehicles with exactly one AV.",
}


def diagnostics_to_feedback(diags: Sequence[Diagnostic]) -> str:
    if not diags:
        raise ValueError("no diagnostics to render")
    lines = []
    for i, d in enumerate(diags, 1):
        message = " ".join(d.message.split()).rstrip(".")
        subject = " ".join(d.subject.split())
        lines.append(f"{i}. [{d.code}] {subject}: {message}. Fix: {_INSTRUCTIONS[d.code]}")
    return "\n".join(lines)
