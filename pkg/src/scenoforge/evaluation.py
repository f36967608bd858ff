"""Driving scores, route completion, and batch-level conformity/diversity metrics."""
from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Sequence

from .compiler import SceneType, classify_scene
from .net_model import Route, network_stats
from .routing import TripGenParams, expand_trips, random_trips, route_length, subsample_trips
from .scenario import Scenario, ScenarioDescription
from .sim import Trace

ACCEL_LIMIT = 3.0
JERK_LIMIT = 5.0
TTC_FLOOR = 3.0


@dataclass(frozen=True)
class ScoreWeights:
    w_comfort: float = 0.2
    w_efficiency: float = 0.3
    w_safety: float = 0.5

    def __post_init__(self):
        ws = (self.w_comfort, self.w_efficiency, self.w_safety)
        if any(w < 0 for w in ws):
            raise ValueError("score weights must be nonnegative")
        if not math.isclose(math.fsum(ws), 1.0, abs_tol=1e-9):
            raise ValueError(f"score weights must sum to 1, got {math.fsum(ws)}")


@dataclass(frozen=True)
class DrivingScore:
    comfort: float
    efficiency: float
    safety: float
    driving_score: float
    route_completion: float
    total_score: float
    success: bool
    use_time: float
    collided: bool = False


def _av_states(trace: Trace, scenario: Scenario):
    return trace.vehicle_states(scenario.av_id)


def route_completion(trace: Trace, scenario: Scenario) -> float:
    av = scenario.av_id
    if trace.events_of(av, "arrive"):
        return 1.0
    states = _av_states(trace, scenario)
    if not states:
        return 0.0
    net = scenario.network
    route = scenario.av_route
    last = states[-1][1]
    done = math.fsum(net.edge(e).length for e in route.edges[:last.route_index])
    lane = net.lane_map[f"{last.edge}_{last.lane}"]
    frac = last.offset / lane.length if lane.length > 0 else 1.0
    done += frac * net.edge(last.edge).length
    total = route_length(net, route)
    if total <= 0:
        return 1.0
    return min(1.0, max(0.0, done / total))


def driving_score(trace: Trace, scenario: Scenario, weights: ScoreWeights = ScoreWeights()) -> DrivingScore:
    av = scenario.av_id
    net = scenario.network
    states = [s for _, s in _av_states(trace, scenario)]
    collided = bool(trace.events_of(av, "collision"))
    arrivals = trace.events_of(av, "arrive")
    departs = trace.events_of(av, "depart")

    if states:
        ok = 0
        prev_accel = None
        ratios = []
        for s in states:
            jerk = 0.0 if prev_accel is None else (s.accel - prev_accel) / trace.dt
            prev_accel = s.accel
            if abs(s.accel) <= ACCEL_LIMIT and abs(jerk) <= JERK_LIMIT:
                ok += 1
            limit = net.lane_map[f"{s.edge}_{s.lane}"].speed
            ratios.append(min(1.0, max(0.0, s.speed / limit)))
        comfort = ok / len(states)
        efficiency = math.fsum(ratios) / len(ratios)
    else:
        # never departed: nothing uncomfortable happened, and no progress was made
        comfort, efficiency = 1.0, 0.0

    if collided:
        safety = 0.0
    else:
        min_ttc = math.inf
        for s in states:
            if s.leader_gap is None or s.leader_speed is None:
                continue
            closing = s.speed - s.leader_speed
            if closing > 0:
                min_ttc = min(min_ttc, max(0.0, s.leader_gap) / closing)
        safety = min(1.0, min_ttc / TTC_FLOOR)

    score = 100.0 * (weights.w_comfort * comfort + weights.w_efficiency * efficiency + weights.w_safety * safety)
    rc = route_completion(trace, scenario)
    if collided:
        rc = min(rc, math.nextafter(1.0, 0.0))
    success = bool(arrivals) and not collided
    if arrivals and departs:
        use_time = arrivals[0].time - departs[0].time
    else:
        use_time = trace.horizon
    return DrivingScore(comfort, efficiency, safety, score, rc, rc * score, success, use_time, collided)


# ---------------------------------------------------------------- conformity


@dataclass(frozen=True)
class BatchRecord:
    """One attempted scenario of a generation batch."""

    request: str
    requested_scene: SceneType | None
    first_pass_ok: bool
    success: bool
    attempts: int = 1
    description: ScenarioDescription | None = None
    scenario: Scenario | None = None


@dataclass(frozen=True)
class ConformityRow:
    index: int
    counted: bool
    scene_type_ok: bool | None
    lanes_ok: bool | None
    vehicles_ok: bool | None
    attempts: int


@dataclass(frozen=True)
class ConformityReport:
    scene_type_accuracy: float | None
    lanes_accuracy: float | None
    vehicles_accuracy: float | None
    success_rate: float
    success_rate_final: float
    rows: tuple[ConformityRow, ...] = field(default=())


def scene_matches(rec: BatchRecord) -> bool | None:
    if rec.scenario is None:
        return None
    target = rec.requested_scene
    if target is None and rec.description is not None:
        target = rec.description.scene_type
    if target is None:
        return None
    return classify_scene(rec.scenario.network) == target


def lanes_match(rec: BatchRecord) -> bool | None:
    if rec.scenario is None or rec.description is None:
        return None
    edges = rec.scenario.network.edges
    return all(
        any(e.name == name and e.num_lanes == count for e in edges)
        for name, count in rec.description.lanes_by_road
    )


def vehicles_match(rec: BatchRecord) -> bool | None:
    if rec.scenario is None or rec.description is None:
        return None
    return len(rec.scenario.routes) == rec.description.vehicle_count


def _ratio(values) -> float | None:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return sum(vals) / len(vals)


def conformity_report(batch: Sequence[BatchRecord], single_pass: bool = True) -> ConformityReport:
    """Accuracy metrics over the counted scenarios plus single-pass and final success rates.

    With ``single_pass`` a scenario only counts as generated when its first
    pass succeeded; repair-loop successes still show up in
    ``success_rate_final`` and in the per-row attempt counts.
    """
    if not batch:
        raise ValueError("conformity_report needs at least one record")
    rows = []
    for i, rec in enumerate(batch):
        counted = rec.success and rec.scenario is not None and (rec.first_pass_ok or not single_pass)
        if counted:
            rows.append(ConformityRow(i, True, scene_matches(rec), lanes_match(rec), vehicles_match(rec), rec.attempts))
        else:
            rows.append(ConformityRow(i, False, None, None, None, rec.attempts))
    n = len(batch)
    return ConformityReport(
        scene_type_accuracy=_ratio(r.scene_type_ok for r in rows if r.counted),
        lanes_accuracy=_ratio(r.lanes_ok for r in rows if r.counted),
        vehicles_accuracy=_ratio(r.vehicles_ok for r in rows if r.counted),
        success_rate=sum(r.counted for r in rows) / n,
        success_rate_final=sum(1 for rec in batch if rec.success and rec.scenario is not None) / n,
        rows=tuple(rows),
    )


# ----------------------------------------------------------------- diversity


@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float


@dataclass(frozen=True)
class DiversityStats:
    lanes: MeanStd
    edges: MeanStd
    route_length: MeanStd
    vehicles: MeanStd
    count: int


def scenario_profile(scenario: Scenario) -> tuple[float, float, float, float]:
    st = network_stats(scenario.network)
    lengths = [route_length(scenario.network, r) for r in scenario.routes]
    mean_len = math.fsum(lengths) / len(lengths) if lengths else 0.0
    return float(st.total_lanes), float(st.total_edges), mean_len, float(len(scenario.routes))


def _mean_std(values: Sequence[float]) -> MeanStd:
    return MeanStd(statistics.fmean(values), statistics.pstdev(values))


def diversity_stats(scenarios: Sequence[Scenario]) -> DiversityStats:
    if not scenarios:
        raise ValueError("diversity_stats needs at least one scenario")
    cols = list(zip(*(scenario_profile(s) for s in scenarios)))
    return DiversityStats(*(_mean_std(c) for c in cols), count=len(scenarios))


# ---------------------------------------------------------------- challenge


RANDOMTRIP_WINDOW = 60.0
RANDOMTRIP_OVERPROVISION = 1.5
RANDOMTRIP_SEED_TRIES = 20


def randomtrip_counterpart(scenario: Scenario, seed: int, window: float = RANDOMTRIP_WINDOW,
                           overprovision: float = RANDOMTRIP_OVERPROVISION) -> Scenario:
    """Same network and vehicle count, traffic drawn by the RandomTrip baseline.

    Trips are over-provisioned from a Poisson stream and subsampled down to
    the scenario's vehicle count; the earliest remaining trip becomes the AV.
    """
    n = len(scenario.routes)
    net = scenario.network
    rate = overprovision * n / window
    for attempt in range(RANDOMTRIP_SEED_TRIES):
        trips = random_trips(net, TripGenParams(rate, window, seed + attempt))
        if len(trips) >= n:
            break
    else:
        raise ValueError(f"RandomTrip produced fewer than {n} trips in {RANDOMTRIP_SEED_TRIES} seeds")
    kept = subsample_trips(trips, n, seed)
    routes, failures = expand_trips(net, kept)
    if failures:
        raise ValueError(f"RandomTrip emitted unreachable trips: {[t.vehicle_id for t, _ in failures]}")
    av = min(routes, key=lambda r: (r.depart_time, r.vehicle_id))
    routes = [Route(r.vehicle_id, r.edges, r.depart_time, "AV" if r is av else "BV") for r in routes]
    return Scenario(net, tuple(routes), av.vehicle_id, scenario.description, scenario.request)
