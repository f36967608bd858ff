"""A small time-stepped microscopic simulator.

Longitudinal motion follows the intelligent driver model; above the desired
speed the free-road term switches to the bounded IIDM form so that entering a
slower segment never produces unbounded braking.  Junctions are modelled as
zones around the node: each connection crosses the zone along the chord
between its incoming and outgoing lane, and two connections conflict when
their chords intersect or they feed the same lane.  Vehicles stop at the
zone boundary while a conflicting vehicle is inside, or while one with higher
priority (or equal priority and a clearly earlier arrival) is due within the
yield headway.  Only the AV changes lanes, and only under ``idm_with_lane_change``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterator

from .compiler import junction_roads
from .geometry import Point, dist, point_at, segments_intersect
from .net_model import CompiledNetwork, Connection, DEFAULT_VTYPES, Route
from .scenario import Scenario

EMERGENCY_DECEL = 9.0
LOOKAHEAD = 300.0
LANE_CHANGE_COOLDOWN = 2.0
ZONE_FRACTION = 0.4
# equal-priority arrivals closer than this are not resolved: neither side yields
TIE_WINDOW = 0.5
POLICIES = ("idm_follow", "idm_with_lane_change")


@dataclass(frozen=True)
class IDMParams:
    a_max: float = 2.0
    b_comf: float = 3.0
    headway_T: float = 1.2
    min_gap_s0: float = 2.0
    veh_length: float = 5.0

    def __post_init__(self):
        for name in ("a_max", "b_comf", "headway_T", "min_gap_s0", "veh_length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"IDM parameter {name} must be > 0")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    horizon: float = 120.0
    idm: IDMParams = IDMParams()
    junction_yield_headway: float = 3.0
    # None departs at the lane speed limit
    depart_speed: float | None = None
    lane_change_gain: float = 0.5
    max_speed: float = DEFAULT_VTYPES[0].max_speed

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.horizon <= self.dt:
            raise ValueError("horizon must exceed dt")


@dataclass(frozen=True)
class VehicleState:
    id: str
    route_index: int
    edge: str
    lane: int
    offset: float
    speed: float
    accel: float
    active: bool
    junction_offset: float | None = None
    leader_gap: float | None = None
    leader_speed: float | None = None


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str
    vehicles: tuple[str, ...]


@dataclass
class Trace:
    dt: float
    horizon: float
    times: list[float] = field(default_factory=list)
    states: list[list[VehicleState]] = field(default_factory=list)
    events: list[SimEvent] = field(default_factory=list)

    def vehicle_states(self, vid: str) -> list[tuple[float, VehicleState]]:
        return [(t, s) for t, step in zip(self.times, self.states) for s in step if s.id == vid]

    def events_of(self, vid: str, kind: str | None = None) -> list[SimEvent]:
        return [e for e in self.events if vid in e.vehicles and (kind is None or e.kind == kind)]

    def digest(self) -> str:
        h = hashlib.sha256()
        for t, step in zip(self.times, self.states):
            h.update(repr((t, step)).encode())
        h.update(repr(self.events).encode())
        return h.hexdigest()


class _NetCache:
    """Per-network lookups the simulator needs every step."""

    def __init__(self, net: CompiledNetwork):
        self.net = net
        self.lanes = {(e.id, l.index): l for e in net.edges for l in e.lanes}
        self.edge_lanes = {e.id: e.num_lanes for e in net.edges}
        self.by_from: dict[tuple[str, int, str], list[Connection]] = {}
        for c in net.connections:
            self.by_from.setdefault((c.from_edge, c.from_lane, c.to_edge), []).append(c)
        for v in self.by_from.values():
            v.sort(key=lambda c: c.to_lane)
        self.radius: dict[str, float] = {}
        for j in net.junctions:
            self.radius[j.id] = max((dist(j.pos, p) for p in j.shape), default=0.0)
        self.end_zone = {}
        self.start_zone = {}
        for e in net.edges:
            for l in e.lanes:
                self.end_zone[(e.id, l.index)] = min(self.radius.get(e.to_junction, 0.0), ZONE_FRACTION * l.length)
                self.start_zone[(e.id, l.index)] = min(self.radius.get(e.from_junction, 0.0), ZONE_FRACTION * l.length)
        self.conn_len: dict[Connection, float] = {}
        self.chord: dict[Connection, tuple[Point, Point]] = {}
        self.junction: dict[Connection, str] = {}
        for c in net.connections:
            a = self.lanes[(c.from_edge, c.from_lane)]
            b = self.lanes[(c.to_edge, c.to_lane)]
            self.conn_len[c] = dist(a.shape[-1], b.shape[0])
            p = point_at(a.shape, a.length - self.end_zone[(c.from_edge, c.from_lane)])
            q = point_at(b.shape, self.start_zone[(c.to_edge, c.to_lane)])
            self.chord[c] = (p, q)
            self.junction[c] = net.edge(c.from_edge).to_junction
        self.priority = self._priorities()
        self.conflicts: dict[Connection, set[Connection]] = {c: set() for c in net.connections}
        by_junction: dict[str, list[Connection]] = {}
        for c in net.connections:
            by_junction.setdefault(self.junction[c], []).append(c)
        for conns in by_junction.values():
            for i, c1 in enumerate(conns):
                for c2 in conns[i + 1:]:
                    if (c1.from_edge, c1.from_lane) == (c2.from_edge, c2.from_lane):
                        continue
                    same_target = (c1.to_edge, c1.to_lane) == (c2.to_edge, c2.to_lane)
                    if same_target or segments_intersect(*self.chord[c1], *self.chord[c2]):
                        self.conflicts[c1].add(c2)
                        self.conflicts[c2].add(c1)

    def _priorities(self) -> dict[Connection, int]:
        major_edges: set[str] = set()
        for j in self.net.junctions:
            roads = junction_roads(self.net, j.id)
            if not roads:
                continue
            if j.kind == "unregulated":
                major_edges.update(r.incoming.id for r in roads if r.incoming is not None)
                continue
            top = max(r.weight for r in roads)
            major_edges.update(r.incoming.id for r in roads if r.incoming is not None and r.weight == top)
        return {
            c: 2 * (c.from_edge in major_edges) + (c.direction in ("s", "r"))
            for c in self.net.connections
        }

    def lane_length(self, edge: str, lane: int) -> float:
        return self.lanes[(edge, lane)].length

    def speed(self, edge: str, lane: int) -> float:
        return self.lanes[(edge, lane)].speed


class _Vehicle:
    def __init__(self, route: Route, order: int):
        self.id = route.vehicle_id
        self.edges = route.edges
        self.kind = route.vehicle_kind
        self.depart = route.depart_time
        self.order = order
        self.k = 0
        self.lane = 0
        self.pos = 0.0
        self.conn: Connection | None = None
        self.cpos = 0.0
        self.via: Connection | None = None
        self.v = 0.0
        self.a = 0.0
        self.active = False
        self.finished = False
        self.last_lane_change = -math.inf

    @property
    def last(self) -> int:
        return len(self.edges) - 1

    @property
    def segment(self):
        if self.conn is not None:
            return ("C", self.conn)
        return ("L", self.edges[self.k], self.lane)

    @property
    def offset(self) -> float:
        return self.cpos if self.conn is not None else self.pos


class Simulator:
    def __init__(self, scenario: Scenario, cfg: SimConfig = SimConfig(), av_policy: str = "idm_follow"):
        if av_policy not in POLICIES:
            raise ValueError(f"unknown AV policy '{av_policy}'; expected one of {POLICIES}")
        self.scenario = scenario
        self.cfg = cfg
        self.policy = av_policy
        self.nc = _NetCache(scenario.network)
        self.vehicles = [_Vehicle(r, i) for i, r in enumerate(scenario.routes)]
        self.pending = sorted(self.vehicles, key=lambda v: (v.depart, v.order))
        self._choice: dict[tuple, Connection | None] = {}

    # ------------------------------------------------------------ topology

    def choose_conn(self, veh: _Vehicle, k: int, lane: int) -> Connection | None:
        if k >= veh.last:
            return None
        key = (veh.edges[k], lane, veh.edges[k + 1], veh.edges[k + 2] if k + 2 <= veh.last else None)
        if key not in self._choice:
            cands = self.nc.by_from.get(key[:3], [])
            best = None
            if cands:
                if key[3] is None:
                    best = cands[0]
                else:
                    onward = [c for c in cands if (c.to_edge, c.to_lane, key[3]) in self.nc.by_from]
                    best = (onward or cands)[0]
            self._choice[key] = best
        return self._choice[key]

    def segments(self, veh: _Vehicle, lane: int | None = None, pos: float | None = None) -> Iterator[tuple]:
        """Yield (segment key, length, distance from the vehicle front to the segment start)."""
        k = veh.k
        lane = veh.lane if lane is None else lane
        if veh.conn is not None and pos is None:
            c = veh.conn
            length = self.nc.conn_len[c]
            yield ("C", c), length, -veh.cpos
            d = length - veh.cpos
            k += 1
            lane = c.to_lane
        else:
            d = -(veh.pos if pos is None else pos)
        while True:
            length = self.nc.lane_length(veh.edges[k], lane)
            yield ("L", veh.edges[k], lane), length, d
            d += length
            if d > LOOKAHEAD or k == veh.last:
                return
            c = self.choose_conn(veh, k, lane)
            if c is None:
                yield ("END",), 0.0, d
                return
            yield ("C", c), self.nc.conn_len[c], d
            d += self.nc.conn_len[c]
            k += 1
            lane = c.to_lane

    def leader(self, veh: _Vehicle, occ, lane: int | None = None, pos: float | None = None):
        """(gap, leader speed, leader vehicle or None for a path end), or None on a free road."""
        own = veh.offset if (lane is None and pos is None) else pos
        length = self.cfg.idm.veh_length
        first = True
        for key, _seg_len, d in self.segments(veh, lane, pos):
            if key[0] == "END":
                return d, 0.0, None
            for y, other in occ.get(key, ()):
                if other is veh:
                    continue
                if first and (y < own or (y == own and other.order > veh.order)):
                    continue
                return d + y - length, other.v, other
            first = False
            if d > LOOKAHEAD:
                break
        return None

    # ------------------------------------------------------------ dynamics

    def desired_speed(self, veh: _Vehicle, lane: int | None = None) -> float:
        if veh.conn is not None and lane is None:
            limit = self.nc.speed(veh.conn.from_edge, veh.conn.from_lane)
        else:
            limit = self.nc.speed(veh.edges[veh.k], veh.lane if lane is None else lane)
        return min(limit, self.cfg.max_speed)

    def idm(self, v: float, v0: float, lead=None) -> float:
        p = self.cfg.idm
        if v <= v0:
            free = p.a_max * (1.0 - (v / v0) ** 4)
        else:
            free = -p.b_comf * (1.0 - (v0 / v) ** (p.a_max * 4.0 / p.b_comf))
        if lead is None:
            return free
        gap, v_lead = lead[0], lead[1]
        s_star = p.min_gap_s0 + max(0.0, v * p.headway_T + v * (v - v_lead) / (2.0 * math.sqrt(p.a_max * p.b_comf)))
        inter = (s_star / max(gap, 1e-3)) ** 2
        if v <= v0:
            return p.a_max * (1.0 - (v / v0) ** 4 - inter)
        return free - p.a_max * inter

    def junction_info(self, veh: _Vehicle):
        """(inside: (junction, conn) | None, approach: (junction, conn, distance) | None)."""
        if veh.conn is not None:
            return (self.nc.junction[veh.conn], veh.conn), None
        lane_key = (veh.edges[veh.k], veh.lane)
        inside = None
        if veh.via is not None and veh.pos <= self.nc.start_zone[lane_key]:
            inside = (self.nc.junction[veh.via], veh.via)
        c = self.choose_conn(veh, veh.k, veh.lane)
        if c is None:
            return inside, None
        boundary = self.nc.lane_length(*lane_key) - self.nc.end_zone[lane_key]
        if veh.pos >= boundary:
            return (self.nc.junction[c], c), None
        return inside, (self.nc.junction[c], c, boundary - veh.pos)

    def must_yield(self, veh: _Vehicle, approach, infos) -> bool:
        j, c, d = approach
        horizon = self.cfg.junction_yield_headway
        eta = d / max(veh.v, 0.1)
        if eta > 2 * horizon:
            return False
        conflicts = self.nc.conflicts[c]
        for other, (inside, appr) in infos.items():
            if other is veh:
                continue
            if inside is not None and inside[0] == j and inside[1] in conflicts:
                return True
            if appr is None or appr[0] != j or appr[1] not in conflicts:
                continue
            eta_o = appr[2] / max(other.v, 0.1)
            if eta_o > horizon:
                continue
            po, pv = self.nc.priority[appr[1]], self.nc.priority[c]
            if po > pv or (po == pv and eta_o < eta - TIE_WINDOW):
                return True
        return False

    def occupancy(self, active):
        occ: dict[tuple, list] = {}
        for v in active:
            occ.setdefault(v.segment, []).append((v.offset, v))
        for lst in occ.values():
            lst.sort(key=lambda item: (item[0], -item[1].order))
        return occ

    def try_lane_change(self, veh: _Vehicle, occ, t: float) -> None:
        if veh.conn is not None or t - veh.last_lane_change < LANE_CHANGE_COOLDOWN:
            return
        inside, approach = self.junction_info(veh)
        if inside is not None:
            return
        if approach is None and veh.k < veh.last:
            mandatory = self.choose_conn(veh, veh.k, veh.lane) is None
        else:
            mandatory = False
        edge = veh.edges[veh.k]
        p = self.cfg.idm
        cur = self.idm(veh.v, self.desired_speed(veh), self.leader(veh, occ))
        best = None
        for target in (veh.lane - 1, veh.lane + 1):
            if not 0 <= target < self.nc.edge_lanes[edge]:
                continue
            if veh.k < veh.last and self.choose_conn(veh, veh.k, target) is None:
                continue
            new_pos = veh.pos * self.nc.lane_length(edge, target) / self.nc.lane_length(edge, veh.lane)
            lead = self.leader(veh, occ, lane=target, pos=new_pos)
            if lead is not None and lead[0] < p.min_gap_s0:
                continue
            rear_ok = True
            for y, other in occ.get(("L", edge, target), ()):
                if y <= new_pos and new_pos - y - p.veh_length < p.min_gap_s0 + other.v * p.headway_T:
                    rear_ok = False
            if not rear_ok:
                continue
            gain = self.idm(veh.v, self.desired_speed(veh, target), lead) - cur
            if (mandatory or gain > self.cfg.lane_change_gain) and (best is None or gain > best[0]):
                best = (gain, target, new_pos)
        if best is not None:
            veh.lane, veh.pos = best[1], best[2]
            veh.last_lane_change = t

    def advance(self, veh: _Vehicle, distance: float) -> bool:
        """Move along the route; True when the vehicle reached its destination."""
        rem = distance
        while True:
            if veh.conn is not None:
                space = self.nc.conn_len[veh.conn] - veh.cpos
                if rem < space:
                    veh.cpos += rem
                    return False
                rem -= space
                veh.via = veh.conn
                veh.k += 1
                veh.lane = veh.conn.to_lane
                veh.pos = 0.0
                veh.conn = None
                continue
            length = self.nc.lane_length(veh.edges[veh.k], veh.lane)
            if veh.via is not None and veh.pos > self.nc.start_zone[(veh.edges[veh.k], veh.lane)]:
                veh.via = None
            space = length - veh.pos
            if rem < space:
                veh.pos += rem
                if veh.via is not None and veh.pos > self.nc.start_zone[(veh.edges[veh.k], veh.lane)]:
                    veh.via = None
                return False
            if veh.k == veh.last:
                veh.pos = length
                return True
            c = self.choose_conn(veh, veh.k, veh.lane)
            if c is None:
                veh.pos = length
                veh.v = 0.0
                return False
            rem -= space
            veh.pos = length
            veh.via = None
            veh.conn = c
            veh.cpos = 0.0

    def insert(self, veh: _Vehicle) -> bool:
        edge = veh.edges[0]
        lanes = range(self.nc.edge_lanes[edge])
        if veh.last > 0:
            lanes = [l for l in lanes if self.nc.by_from.get((edge, l, veh.edges[1]))] or list(lanes)
        p = self.cfg.idm
        for lane in lanes:
            v0 = min(self.nc.speed(edge, lane), self.cfg.max_speed)
            speed = v0 if self.cfg.depart_speed is None else min(self.cfg.depart_speed, v0)
            blocked = any(
                o.active and o.conn is None and o.edges[o.k] == edge and o.lane == lane
                and o.pos - p.veh_length < p.min_gap_s0 + speed * p.headway_T
                for o in self.vehicles
            )
            if not blocked:
                veh.lane, veh.pos, veh.v, veh.active = lane, 0.0, speed, True
                return True
        return False

    def state(self, veh: _Vehicle, lead=None) -> VehicleState:
        if veh.conn is not None:
            edge, lane = veh.conn.from_edge, veh.conn.from_lane
            offset = self.nc.lane_length(edge, lane)
            return VehicleState(veh.id, veh.k, edge, lane, offset, veh.v, veh.a, veh.active, veh.cpos,
                                lead[0] if lead else None, lead[1] if lead else None)
        return VehicleState(veh.id, veh.k, veh.edges[veh.k], veh.lane, veh.pos, veh.v, veh.a, veh.active, None,
                            lead[0] if lead else None, lead[1] if lead else None)

    # ------------------------------------------------------------- main loop

    def run(self) -> Trace:
        cfg = self.cfg
        trace = Trace(cfg.dt, cfg.horizon)
        n_steps = int(round(cfg.horizon / cfg.dt))
        av_id = self.scenario.av_id
        for step in range(n_steps):
            t = round(step * cfg.dt, 9)
            t_next = round((step + 1) * cfg.dt, 9)
            still = []
            for veh in self.pending:
                if veh.depart <= t + 1e-9 and self.insert(veh):
                    trace.events.append(SimEvent(t, "depart", (veh.id,)))
                else:
                    still.append(veh)
            self.pending = still
            active = [v for v in self.vehicles if v.active]
            if not active:
                if not self.pending:
                    break
                continue

            occ = self.occupancy(active)
            if self.policy == "idm_with_lane_change":
                for veh in active:
                    if veh.id == av_id:
                        self.try_lane_change(veh, occ, t)
                occ = self.occupancy(active)
            infos = {v: self.junction_info(v) for v in active}
            leads = {}
            for veh in active:
                lead = self.leader(veh, occ)
                leads[veh] = lead if lead is not None and lead[2] is not None else None
                acc = self.idm(veh.v, self.desired_speed(veh), lead)
                approach = infos[veh][1]
                if approach is not None and self.must_yield(veh, approach, infos):
                    d = approach[2]
                    if veh.v * veh.v / (2 * EMERGENCY_DECEL) <= d:
                        acc = min(acc, self.idm(veh.v, self.desired_speed(veh), (d, 0.0)))
                veh.a = acc

            arrived = []
            for veh in active:
                v_new = veh.v + veh.a * cfg.dt
                if v_new < 0:
                    move = veh.v * veh.v / (2 * -veh.a) if veh.a < 0 else 0.0
                    v_new = 0.0
                else:
                    move = veh.v * cfg.dt + 0.5 * veh.a * cfg.dt * cfg.dt
                veh.v = v_new
                if self.advance(veh, max(0.0, move)):
                    arrived.append(veh)
            for veh in arrived:
                veh.active = False
                veh.finished = True
                trace.events.append(SimEvent(t_next, "arrive", (veh.id,)))

            moving = [v for v in active if v.active]
            collided: set[_Vehicle] = set()
            occ = self.occupancy(moving)
            for veh in moving:
                lead = self.leader(veh, occ)
                if lead is not None and lead[2] is not None and lead[0] < 0:
                    self._collide(trace, t_next, veh, lead[2], collided)
            infos = {v: self.junction_info(v) for v in moving}
            inside = [(v, info[0]) for v, info in infos.items() if info[0] is not None]
            for i, (a, ia) in enumerate(inside):
                for b, ib in inside[i + 1:]:
                    if ia[0] == ib[0] and ib[1] in self.nc.conflicts[ia[1]]:
                        self._collide(trace, t_next, a, b, collided)
            for veh in collided:
                veh.active = False
                veh.v = 0.0
                veh.a = 0.0

            trace.times.append(t_next)
            trace.states.append([self.state(v, leads.get(v)) for v in active])

        end = trace.times[-1] if trace.times else 0.0
        for veh in self.vehicles:
            if veh.active or veh in self.pending:
                trace.events.append(SimEvent(end, "timeout", (veh.id,)))
        return trace

    @staticmethod
    def _collide(trace: Trace, t: float, a: _Vehicle, b: _Vehicle, collided: set) -> None:
        if a in collided or b in collided:
            return
        collided.update((a, b))
        trace.events.append(SimEvent(t, "collision", tuple(sorted((a.id, b.id)))))


def simulate(scenario: Scenario, cfg: SimConfig = SimConfig(), av_policy: str = "idm_follow") -> Trace:
    return Simulator(scenario, cfg, av_policy).run()
