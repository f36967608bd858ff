"""Edge-level routing over the connection graph and the RandomTrip baseline.

Random draws come from NumPy's PCG64 bit generator (a 128-bit linear
congruential generator with a permuted output), seeded explicitly per call.
Only ``Generator.random()`` doubles are consumed; indices are derived as
``floor(u * n)`` so the stream-to-trip mapping is fixed by this module.
"""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .compiler import is_reverse
from .net_model import CompiledNetwork, DiagCode, Diagnostic, DiagnosticError, Route, Trip

log = logging.getLogger(__name__)

MAX_DRAWS_PER_TRIP = 100


@dataclass(frozen=True)
class RoutingGraph:
    vertices: tuple[str, ...]
    arcs: dict[str, tuple[str, ...]] = field(hash=False)
    cost: dict[str, float] = field(hash=False)

    @classmethod
    def from_network(cls, net: CompiledNetwork) -> "RoutingGraph":
        arcs = {e.id: tuple(sorted(net.successors[e.id])) for e in net.edges}
        cost = {e.id: e.length / e.speed for e in net.edges}
        return cls(tuple(e.id for e in net.edges), arcs, cost)

    def path_cost(self, path: Sequence[str]) -> float:
        total = 0.0
        for e in path:
            total += self.cost[e]
        return total


@dataclass(frozen=True)
class TripGenParams:
    arrival_rate: float
    horizon: float
    seed: int
    fringe_only: bool = True

    def __post_init__(self):
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be > 0")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")


def _unreachable(src: str, dst: str) -> Diagnostic:
    return Diagnostic(
        DiagCode.Unreachable,
        f"edge '{dst}' cannot be reached from edge '{src}' through the network's connections",
        f"{src}->{dst}",
    )


def _unknown_edge(edge_id: str, who: str) -> Diagnostic:
    return Diagnostic(DiagCode.UnknownEdge, f"{who} references edge '{edge_id}', which is not in the network", edge_id)


def graph_shortest_path(graph: RoutingGraph, src: str, dst: str) -> tuple[str, ...] | None:
    """Minimum-cost edge sequence; equal costs resolve to the lexicographically smallest sequence."""
    start = (graph.cost[src], (src,))
    best = {src: start}
    heap = [start]
    while heap:
        label = heapq.heappop(heap)
        cost, path = label
        v = path[-1]
        if best[v] != label:
            continue
        if v == dst:
            return path
        for w in graph.arcs[v]:
            cand = (cost + graph.cost[w], path + (w,))
            if w not in best or cand < best[w]:
                best[w] = cand
                heapq.heappush(heap, cand)
    return None


def shortest_route(net: CompiledNetwork, from_edge: str, to_edge: str, vehicle_id: str = "",
                   depart_time: float = 0.0, vehicle_kind: str = "BV",
                   graph: RoutingGraph | None = None) -> Route:
    graph = graph or RoutingGraph.from_network(net)
    missing = [e for e in (from_edge, to_edge) if e not in graph.cost]
    if missing:
        raise DiagnosticError([_unknown_edge(e, f"route of '{vehicle_id or '?'}'") for e in missing])
    path = graph_shortest_path(graph, from_edge, to_edge)
    if path is None:
        raise DiagnosticError([_unreachable(from_edge, to_edge)])
    return Route(vehicle_id, path, depart_time, vehicle_kind)


def expand_trips(net: CompiledNetwork, trips: Sequence[Trip]) -> tuple[list[Route], list[tuple[Trip, Diagnostic]]]:
    graph = RoutingGraph.from_network(net)
    routes: list[Route] = []
    failures: list[tuple[Trip, Diagnostic]] = []
    for t in trips:
        try:
            routes.append(shortest_route(net, t.depart_edge, t.arrive_edge, t.vehicle_id,
                                         t.depart_time, t.vehicle_kind, graph))
        except DiagnosticError as exc:
            failures.append((t, exc.diagnostics[0]))
    return routes, failures


def fringe_edges(net: CompiledNetwork) -> list[str]:
    """Edges entering from or leaving to the network boundary.

    A junction counts as boundary for an edge when its only other road is
    the edge's own reverse twin.
    """
    out = []
    for e in net.edges:
        upstream = [i for i in net.incoming(e.from_junction) if not is_reverse(i, e)]
        downstream = [o for o in net.outgoing(e.to_junction) if not is_reverse(o, e)]
        if not upstream or not downstream:
            out.append(e.id)
    return out


def poisson_times(rate: float, horizon: float, rng: np.random.Generator) -> list[float]:
    times = []
    t = 0.0
    while True:
        t += -math.log1p(-rng.random()) / rate
        if t > horizon:
            return times
        times.append(t)


def random_trips(net: CompiledNetwork, params: TripGenParams) -> list[Trip]:
    eligible = fringe_edges(net) if params.fringe_only else [e.id for e in net.edges]
    if len(eligible) < 2:
        raise ValueError(f"random_trips needs at least 2 eligible edges, found {len(eligible)}")
    rng = np.random.Generator(np.random.PCG64(params.seed))
    graph = RoutingGraph.from_network(net)
    reachable: dict[tuple[str, str], bool] = {}
    n = len(eligible)
    trips: list[Trip] = []
    for t in poisson_times(params.arrival_rate, params.horizon, rng):
        for _ in range(MAX_DRAWS_PER_TRIP):
            src = eligible[int(rng.random() * n)]
            dst = eligible[int(rng.random() * n)]
            if src == dst:
                continue
            key = (src, dst)
            if key not in reachable:
                reachable[key] = graph_shortest_path(graph, src, dst) is not None
            if reachable[key]:
                trips.append(Trip(f"rt{len(trips)}", "BV", src, dst, round(t, 2)))
                break
        else:
            log.warning("no reachable origin/destination pair after %d draws; trip at t=%.2f skipped",
                        MAX_DRAWS_PER_TRIP, t)
    return trips


def subsample_trips(trips: Sequence[Trip], n: int, seed: int) -> list[Trip]:
    if n > len(trips):
        raise ValueError(f"cannot keep {n} of {len(trips)} trips")
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = list(range(len(trips)))
    for i in range(n):
        j = i + int(rng.random() * (len(idx) - i))
        idx[i], idx[j] = idx[j], idx[i]
    return [trips[i] for i in sorted(idx[:n])]


def route_length(net: CompiledNetwork, route: Route) -> float:
    missing = [e for e in route.edges if e not in net.edge_map]
    if missing:
        raise DiagnosticError([_unknown_edge(e, f"route of '{route.vehicle_id}'") for e in missing])
    return math.fsum(net.edge(e).length for e in route.edges)
