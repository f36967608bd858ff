"""End-to-end generation runs: request in, scenario directories and batch reports out."""
from __future__ import annotations

import csv
import io
import json
import logging
import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import agents
from .agents import Attempt, ExhaustedAttempts, RagExample, RepairConfig, Verdict
from .compiler import SceneType, classify_scene, compile as compile_plan, validate
from .evaluation import (
    BatchRecord, DrivingScore, conformity_report, diversity_stats, driving_score, randomtrip_counterpart,
)
from .llm import Backend, BackendConfig, BackendError
from .net_model import (
    CompiledNetwork, Diagnostic, DiagnosticError, NetworkPlan, Trip, network_stats, serialize_net,
    serialize_plain, serialize_routes, serialize_sumocfg, serialize_trips,
)
from .rag import RagStore
from .render import render_svg_text
from .routing import expand_trips
from .scenario import Scenario, ScenarioDescription
from .sim import SimConfig, simulate

log = logging.getLogger(__name__)

FILES = ("description.txt", "nodes.nod.xml", "edges.edg.xml", "net.net.xml", "trips.trips.xml",
         "routes.rou.xml", "scenario.sumocfg", "attempts.log", "verdict.txt", "render.svg")

_SCENE_WORDS = [
    (re.compile(r"\b(off|on)[- ]?ramp|\bramp\b|\bexit ramp|\bentrance ramp", re.I), SceneType.ramp),
    (re.compile(r"\bT[- ]?(intersection|junction|shaped?)\b"), SceneType.t_intersection),
    (re.compile(r"\bY[- ]?(intersection|junction|shaped?)\b"), SceneType.y_intersection),
    (re.compile(r"\b(four|4)[- ]?way\b|\bcrossroads?\b", re.I), SceneType.four_way),
    (re.compile(r"\bforks?\b|\bforking\b", re.I), SceneType.fork),
    (re.compile(r"\bmerg(e|es|ing)\b", re.I), SceneType.merge),
]


def infer_scene(request: str) -> SceneType | None:
    """Scene type a request asks for, or None when it is generic."""
    for pattern, scene in _SCENE_WORDS:
        if pattern.search(request):
            return scene
    return None


@dataclass(frozen=True)
class RunConfig:
    request: str
    out_dir: Path
    backend: BackendConfig
    count: int = 1
    scene: SceneType | None = None
    rag: bool = False
    rag_db: Path | None = None
    seed: int = 0
    max_attempts: int = 3
    jobs: int = 1
    use_interpreter: bool = True
    compile_check: bool = True
    evaluate: bool = True
    challenge: bool = True
    av_policy: str = "idm_follow"

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if not self.request.strip():
            raise ValueError("request must be nonempty")
        if self.rag and self.rag_db is None:
            raise ValueError("--rag needs a store path (--rag-db)")
        object.__setattr__(self, "out_dir", Path(self.out_dir))


@dataclass
class ScenarioOutcome:
    index: int
    request: str
    requested_scene: SceneType | None
    success: bool = False
    first_pass_ok: bool = False
    description: ScenarioDescription | None = None
    scenario: Scenario | None = None
    net_attempts: list[Attempt] = field(default_factory=list)
    vehicle_attempts: list[Attempt] = field(default_factory=list)
    verdicts: list[Verdict] = field(default_factory=list)
    rag_entry: str | None = None
    error: str | None = None
    score: DrivingScore | None = None
    baseline_score: DrivingScore | None = None

    @property
    def attempts(self) -> int:
        return len(self.net_attempts) + len(self.vehicle_attempts)

    def record(self) -> BatchRecord:
        return BatchRecord(self.request, self.requested_scene, self.first_pass_ok, self.success,
                           max(1, len(self.net_attempts)), self.description, self.scenario)


@dataclass
class BatchSummary:
    outcomes: list[ScenarioOutcome]
    results: dict
    out_dir: Path

    @property
    def succeeded(self) -> int:
        return sum(o.success for o in self.outcomes)

    @property
    def exit_code(self) -> int:
        return 0 if self.succeeded else 1


# ----------------------------------------------------------------- stages


def compile_diagnostics(plan: NetworkPlan) -> list[Diagnostic]:
    diags = validate(plan)
    if diags:
        return diags
    try:
        compile_plan(plan)
    except DiagnosticError as exc:
        return exc.diagnostics
    return []


def trip_diagnostics(net: CompiledNetwork, trips: Sequence[Trip]) -> list[Diagnostic]:
    _, failures = expand_trips(net, trips)
    return [d for _, d in failures]


def _format_attempts(stage: str, attempts: Sequence[Attempt]) -> list[str]:
    lines = []
    for a in attempts:
        status = "ok" if a.ok else "failed"
        lines.append(f"{stage} attempt {a.number}: response {a.response_digest} {status}")
        if a.feedback:
            lines.append("  feedback given:")
            lines.extend("    " + ln for ln in a.feedback.splitlines())
        for d in a.diagnostics:
            lines.append(f"  [{d.code}] {d.subject}: {d.message}")
    return lines


def run_scenario(i: int, cfg: RunConfig, backend: Backend, store: RagStore | None = None,
                 description_text: str | None = None, vehicle_count: int | None = None) -> ScenarioOutcome:
    """Generate one scenario and write its directory.

    ``description_text`` skips the interpreter and binds the given text
    as the description (crash-report mode and the interpreter ablation).
    """
    requested = cfg.scene or infer_scene(cfg.request)
    out = ScenarioOutcome(i, cfg.request, requested)
    d = cfg.out_dir / f"scenario_{i}"
    d.mkdir(parents=True, exist_ok=True)
    lines = [f"scenario {i}", f"request: {cfg.request}"]
    repair = RepairConfig(cfg.max_attempts)
    chan = f"scenario_{i}"
    files: dict[str, str] = {}

    try:
        if description_text is not None:
            desc_text = description_text
            lines.append("interpret: skipped, description supplied directly")
        elif cfg.use_interpreter:
            try:
                out.description = agents.interpret_one(backend, cfg.request, f"{chan}/interpret")
            except DiagnosticError as exc:
                lines.append("interpret: failed")
                lines.extend(f"  [{x.code}] {x.subject}: {x.message}" for x in exc.diagnostics)
                raise
            desc = out.description
            desc_text = desc.text.strip()
            vehicle_count = desc.vehicle_count
            lines.append(f"interpret: ok (scene {desc.scene_type}, {desc.vehicle_count} vehicles, "
                         f"lanes {dict(desc.lanes_by_road)})")
        else:
            desc_text = cfg.request
            lines.append("interpret: bypassed, request used as description")
        files["description.txt"] = desc_text.rstrip() + "\n"

        examples: list[RagExample] = []
        if store is not None and len(store):
            entry, sim_ = store.query(desc_text, 1)[0]
            examples.append(RagExample(entry.description, entry.node_text, entry.edge_text, entry.id))
            out.rag_entry = entry.id
            lines.append(f"rag: injected example {entry.id} (similarity {sim_:.4f})")

        net_check = compile_diagnostics if cfg.compile_check else (lambda plan: [])
        try:
            plan, _ = agents.repair_loop(
                lambda fb: agents.generate_net(backend, desc_text, examples, fb, f"{chan}/net"),
                net_check, repair, log=out.net_attempts,
            )
        finally:
            lines.extend(_format_attempts("net", out.net_attempts))
        if not cfg.compile_check:
            lines.append("net: compile check disabled, first parsed response accepted")
        net = compile_plan(plan)
        node_text, edge_text = serialize_plain(plan)
        files["nodes.nod.xml"] = node_text
        files["edges.edg.xml"] = edge_text
        files["net.net.xml"] = serialize_net(net)
        files["render.svg"] = render_svg_text(net)
        lines.append(f"net: compiled, scene {classify_scene(net)}, {len(net.edges)} edges")

        summary = agents.net_digest(net)
        vlog = out.vehicle_attempts

        def gen_vehicles(fb):
            return agents.generate_vehicles(backend, desc_text, summary, vehicle_count, fb, f"{chan}/vehicles")

        def vehicles(first_feedback=None):
            mark = len(vlog)
            try:
                return agents.repair_loop(gen_vehicles, lambda trips: trip_diagnostics(net, trips), repair,
                                          first_feedback=first_feedback, log=vlog)[0]
            finally:
                lines.extend(_format_attempts("vehicles", vlog[mark:]))

        trips = vehicles()
        scenario = _build_scenario(net, trips, out.description, cfg.request)

        if cfg.evaluate and description_text is None:
            verdict = _evaluate(backend, scenario, cfg.request, f"{chan}/evaluate", lines)
            if verdict is not None:
                out.verdicts.append(verdict)
                if not verdict.passed and len(vlog) < cfg.max_attempts:
                    lines.append("evaluate: regenerating vehicles with the evaluator's reasoning")
                    try:
                        trips = vehicles(verdict.reasoning)
                        scenario = _build_scenario(net, trips, out.description, cfg.request)
                        again = _evaluate(backend, scenario, cfg.request, f"{chan}/evaluate", lines)
                        if again is not None:
                            out.verdicts.append(again)
                    except ExhaustedAttempts:
                        lines.append("evaluate: regeneration failed, keeping the previous vehicles")

        out.scenario = scenario
        routes = scenario.routes
        files["trips.trips.xml"] = serialize_trips(trips)
        files["routes.rou.xml"] = serialize_routes(routes)
        files["scenario.sumocfg"] = serialize_sumocfg("net.net.xml", "routes.rou.xml")
        out.success = True
        out.first_pass_ok = out.net_attempts[0].ok and out.vehicle_attempts[0].ok
        lines.append("result: success")
    except ExhaustedAttempts as exc:
        out.error = f"exhausted attempts: {exc}"
    except DiagnosticError as exc:
        out.error = f"{exc}"
    except BackendError as exc:
        out.error = f"backend: {exc}"
    if not out.success:
        lines.append(f"result: failed ({out.error})")

    verdict_text = "not evaluated\n"
    if out.verdicts:
        v = out.verdicts[-1]
        verdict_text = ("PASS" if v.passed else "FAIL") + ("\n" + v.reasoning if v.reasoning else "") + "\n"
    files["verdict.txt"] = verdict_text
    files["attempts.log"] = "\n".join(lines) + "\n"
    for name in FILES:
        if name in files:
            (d / name).write_text(files[name], encoding="utf-8")
    return out


def _build_scenario(net, trips, description, request) -> Scenario:
    routes, failures = expand_trips(net, trips)
    if failures:
        raise DiagnosticError([diag for _, diag in failures])
    av = next(t.vehicle_id for t in trips if t.vehicle_kind == "AV")
    return Scenario(net, tuple(routes), av, description, request)


def _evaluate(backend, scenario, request, channel, lines) -> Verdict | None:
    digest = agents.scenario_digest(scenario, classify_scene(scenario.network))
    try:
        verdict = agents.evaluate_scenario(backend, digest, request, channel)
    except DiagnosticError as exc:
        lines.append(f"evaluate: unusable verdict ({exc})")
        return None
    first = verdict.reasoning.splitlines()[0] if verdict.reasoning else ""
    lines.append(f"evaluate: {'PASS' if verdict.passed else 'FAIL'}" + (f" - {first}" if first else ""))
    return verdict


# ------------------------------------------------------------- challenge


def challenge_scores(out: ScenarioOutcome, seed: int, av_policy: str) -> None:
    if out.scenario is None:
        return
    cfg = SimConfig()
    out.score = driving_score(simulate(out.scenario, cfg, av_policy), out.scenario)
    try:
        baseline = randomtrip_counterpart(out.scenario, seed + out.index)
    except ValueError as exc:
        log.info("no RandomTrip counterpart for scenario %d: %s", out.index, exc)
        return
    out.baseline_score = driving_score(simulate(baseline, cfg, av_policy), baseline)


def _aggregate(scores: Sequence[DrivingScore]) -> dict | None:
    if not scores:
        return None

    def ms(values):
        return {"mean": statistics.fmean(values), "std": statistics.pstdev(values)}

    return {
        "n": len(scores),
        "driving_score": ms([s.driving_score for s in scores]),
        "total_score": ms([s.total_score for s in scores]),
        "route_completion": ms([s.route_completion for s in scores]),
        "use_time": ms([s.use_time for s in scores]),
        "success_rate": sum(s.success for s in scores) / len(scores),
    }


# ----------------------------------------------------------------- batch


def _score_dict(s: DrivingScore | None) -> dict | None:
    if s is None:
        return None
    return {
        "comfort": s.comfort, "efficiency": s.efficiency, "safety": s.safety,
        "driving_score": s.driving_score, "route_completion": s.route_completion,
        "total_score": s.total_score, "success": s.success, "use_time": s.use_time,
    }


def batch_results(cfg: RunConfig, outcomes: Sequence[ScenarioOutcome]) -> dict:
    conf = conformity_report([o.record() for o in outcomes])
    generated = [o.scenario for o in outcomes if o.success and o.scenario is not None]
    div = diversity_stats(generated) if generated else None
    rows = []
    for o, r in zip(outcomes, conf.rows):
        row = {
            "index": o.index,
            "success": o.success,
            "first_pass_ok": o.first_pass_ok,
            "net_attempts": len(o.net_attempts),
            "vehicle_attempts": len(o.vehicle_attempts),
            "requested_scene": str(o.requested_scene) if o.requested_scene else None,
            "generated_scene": str(classify_scene(o.scenario.network)) if o.scenario else None,
            "scene_type_ok": r.scene_type_ok,
            "lanes_ok": r.lanes_ok,
            "vehicles_ok": r.vehicles_ok,
            "rag_entry": o.rag_entry,
            "verdict": (("PASS" if o.verdicts[-1].passed else "FAIL") if o.verdicts else None),
            "error": o.error,
        }
        if o.scenario is not None:
            st = network_stats(o.scenario.network)
            row.update(lanes=st.total_lanes, edges=st.total_edges, total_length=st.total_edge_length,
                       vehicles=len(o.scenario.routes))
        row["score"] = _score_dict(o.score)
        row["randomtrip_score"] = _score_dict(o.baseline_score)
        rows.append(row)

    def md(m):
        return {"mean": m.mean, "std": m.std}

    return {
        "request": cfg.request,
        "count": cfg.count,
        "seed": cfg.seed,
        "conformity": {
            "success_rate": conf.success_rate,
            "success_rate_final": conf.success_rate_final,
            "scene_type_accuracy": conf.scene_type_accuracy,
            "lanes_accuracy": conf.lanes_accuracy,
            "vehicles_accuracy": conf.vehicles_accuracy,
        },
        "diversity": None if div is None else {
            "n": div.count, "lanes": md(div.lanes), "edges": md(div.edges),
            "route_length": md(div.route_length), "vehicles": md(div.vehicles),
        },
        "challenge": {
            "ours": _aggregate([o.score for o in outcomes if o.score is not None]),
            "randomtrip": _aggregate([o.baseline_score for o in outcomes if o.baseline_score is not None]),
        },
        "scenarios": rows,
    }


CSV_FIELDS = ("index", "success", "first_pass_ok", "net_attempts", "vehicle_attempts", "requested_scene",
              "generated_scene", "scene_type_ok", "lanes_ok", "vehicles_ok", "lanes", "edges", "total_length", "vehicles",
              "driving_score", "total_score", "randomtrip_driving_score", "randomtrip_total_score", "verdict")


def results_csv(results: dict) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in results["scenarios"]:
        flat = dict(row)
        for key, prefix in (("score", ""), ("randomtrip_score", "randomtrip_")):
            s = row.get(key) or {}
            flat[prefix + "driving_score"] = s.get("driving_score")
            flat[prefix + "total_score"] = s.get("total_score")
        w.writerow(flat)
    return buf.getvalue()


def write_batch(cfg: RunConfig, outcomes: Sequence[ScenarioOutcome]) -> dict:
    from .report import text_report

    results = batch_results(cfg, outcomes)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "results.json").write_text(json.dumps(results, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    (cfg.out_dir / "scenarios.csv").write_text(results_csv(results), encoding="utf-8")
    (cfg.out_dir / "report.txt").write_text(text_report(results), encoding="utf-8")
    return results


def run_generate(cfg: RunConfig, backend: Backend | None = None, store: RagStore | None = None) -> BatchSummary:
    backend = backend or Backend(cfg.backend)
    if cfg.rag and store is None:
        store = RagStore.load(cfg.rag_db)
        if not len(store):
            raise ValueError(f"RAG store {cfg.rag_db} is empty")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)

    def one(i: int) -> ScenarioOutcome:
        out = run_scenario(i, cfg, backend, store if cfg.rag else None, description_text=None)
        if cfg.challenge:
            challenge_scores(out, cfg.seed, cfg.av_policy)
        return out

    if cfg.jobs == 1:
        outcomes = [one(i) for i in range(cfg.count)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(one, range(cfg.count)))
    results = write_batch(cfg, outcomes)
    return BatchSummary(outcomes, results, cfg.out_dir)


def crash_report(report_text: str, backend: Backend, out_dir: Path, max_attempts: int = 3,
                 challenge: bool = False) -> ScenarioOutcome:
    """Rebuild a scenario straight from a crash narrative, skipping the interpreter."""
    if not report_text.strip():
        raise ValueError("crash report text is empty")
    cfg = RunConfig(request=report_text.strip(), out_dir=Path(out_dir), backend=backend.cfg,
                    max_attempts=max_attempts, evaluate=False, challenge=challenge)
    count = agents.count_report_vehicles(report_text) or None
    out = run_scenario(0, cfg, backend, description_text=report_text.strip(), vehicle_count=count)
    if challenge:
        challenge_scores(out, cfg.seed, cfg.av_policy)
    write_batch(cfg, [out])
    return out
