from __future__ import annotations

from dataclasses import dataclass, field

from .compiler import SceneType
from .net_model import CompiledNetwork, DiagCode, Diagnostic, DiagnosticError, Route


@dataclass(frozen=True)
class ScenarioDescription:
    """Interpreter output: free narrative plus the machine-readable footer."""

    narrative: str
    scene_type: SceneType
    lanes_by_road: tuple[tuple[str, int], ...]
    vehicle_count: int
    text: str = field(default="", compare=False)

    def __post_init__(self):
        if self.vehicle_count < 1:
            raise ValueError("vehicle_count must be >= 1")

    @property
    def lanes(self) -> dict[str, int]:
        return dict(self.lanes_by_road)


@dataclass(frozen=True)
class Scenario:
    network: CompiledNetwork
    routes: tuple[Route, ...]
    av_id: str
    description: ScenarioDescription | None = None
    request: str = ""

    def __post_init__(self):
        object.__setattr__(self, "routes", tuple(self.routes))
        hits = [r for r in self.routes if r.vehicle_id == self.av_id]
        if len(hits) != 1:
            raise ValueError(f"AV '{self.av_id}' must appear in exactly one route, found {len(hits)}")
        check_routes(self.network, self.routes)

    @property
    def av_route(self) -> Route:
        return next(r for r in self.routes if r.vehicle_id == self.av_id)


def check_routes(net: CompiledNetwork, routes) -> None:
    diags = []
    for r in routes:
        for e in r.edges:
            if e not in net.edge_map:
                diags.append(Diagnostic(DiagCode.UnknownEdge, f"route of '{r.vehicle_id}' uses unknown edge '{e}'", e))
        for a, b in zip(r.edges, r.edges[1:]):
            if a in net.edge_map and b not in net.successors.get(a, ()):
                diags.append(Diagnostic(
                    DiagCode.Unreachable, f"route of '{r.vehicle_id}' jumps from '{a}' to unconnected '{b}'", f"{a}->{b}",
                ))
    if diags:
        raise DiagnosticError(diags)
