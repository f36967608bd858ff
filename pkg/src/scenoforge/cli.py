"""Command-line entry point."""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .compiler import CompileOptions, SceneType, classify_scene, compile as compile_plan
from .evaluation import driving_score, randomtrip_counterpart, route_completion
from .llm import Backend, BackendConfig
from .net_model import (
    DiagnosticError, network_stats, parse_net, parse_plain, parse_routes, parse_trips, serialize_net,
    serialize_routes, serialize_trips,
)
from .pipeline import RunConfig, crash_report, run_generate
from .rag import RagStore, ingest_net
from .render import render_svg
from .report import load_results, render_figures, text_report
from .routing import TripGenParams, expand_trips, random_trips, shortest_route
from .scenario import Scenario
from .sim import POLICIES, SimConfig, simulate

log = logging.getLogger("scenoforge")

DEFAULT_ENDPOINT = "https://api.openai.com/v1"
EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

# generate options that may come from --config; value is the parser applied to file strings
_CONFIG_KEYS = {
    "request": str, "count": int, "scene": str, "backend": str, "endpoint": str, "model": str,
    "temperature": float, "seed": int, "max_attempts": int, "rag": None, "rag_db": str, "out": str,
    "jobs": int, "av_policy": str, "no_interpreter": None, "no_compile_check": None, "no_evaluate": None,
    "no_challenge": None,
}
_DEFAULTS = {
    "count": 1, "backend": "http", "endpoint": DEFAULT_ENDPOINT, "model": "gpt-4", "temperature": 0.2,
    "seed": 0, "max_attempts": 3, "rag": False, "jobs": 1, "av_policy": "idm_follow", "out": "out",
    "no_interpreter": False, "no_compile_check": False, "no_evaluate": False, "no_challenge": False,
}


class ConfigError(ValueError):
    pass


def read_config(path: Path) -> dict:
    """Flat ``key = value`` file; keys match the long flags (dashes or underscores)."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string("[run]\n" + path.read_text(encoding="utf-8"), source=str(path))
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for raw_key, raw in cp["run"].items():
        key = raw_key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}: unknown key '{raw_key}'")
        conv = _CONFIG_KEYS[key]
        try:
            out[key] = cp["run"].getboolean(raw_key) if conv is None else conv(raw)
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for '{raw_key}': {raw}") from exc
    return out


def backend_config(spec: str, endpoint: str | None, model: str, temperature: float) -> BackendConfig:
    mode, _, where = spec.partition(":")
    if mode not in ("http", "replay", "record"):
        raise ConfigError(f"--backend must be http, replay:DIR or record:DIR, got '{spec}'")
    if mode in ("replay", "record") and not where:
        raise ConfigError(f"--backend {mode} needs a transcript directory ({mode}:DIR)")
    if mode == "replay" and not Path(where).is_dir():
        raise ConfigError(f"transcript directory {where} does not exist")
    return BackendConfig(mode=mode, endpoint=endpoint if mode != "replay" else None, model_name=model,
                         temperature=temperature, transcript_dir=Path(where) if where else None)


def _merged(args: argparse.Namespace) -> dict:
    values = dict(_DEFAULTS)
    if getattr(args, "config", None):
        values.update(read_config(Path(args.config)))
    for key in _CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None and v is not False:
            values[key] = v
    return values


def _scene(value: str | None) -> SceneType | None:
    if value is None:
        return None
    try:
        return SceneType(value)
    except ValueError:
        raise ConfigError(f"unknown scene '{value}'; choose from {[s.value for s in SceneType]}") from None


def _print_diagnostics(exc: DiagnosticError) -> None:
    for d in exc.diagnostics:
        print(f"error: [{d.code}] {d.subject}: {d.message}", file=sys.stderr)


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    v = _merged(args)
    if not v.get("request"):
        raise ConfigError("generate needs --request (or 'request' in the config file)")
    cfg = RunConfig(
        request=v["request"], out_dir=Path(v["out"]),
        backend=backend_config(v["backend"], v["endpoint"], v["model"], v["temperature"]),
        count=v["count"], scene=_scene(v.get("scene")), rag=v["rag"],
        rag_db=Path(v["rag_db"]) if v.get("rag_db") else None, seed=v["seed"], max_attempts=v["max_attempts"],
        jobs=v["jobs"], use_interpreter=not v["no_interpreter"], compile_check=not v["no_compile_check"],
        evaluate=not v["no_evaluate"], challenge=not v["no_challenge"], av_policy=v["av_policy"],
    )
    summary = run_generate(cfg)
    for o in summary.outcomes:
        status = "ok" if o.success else f"FAILED ({o.error})"
        print(f"scenario_{o.index}: {status}")
    print(f"{summary.succeeded}/{len(summary.outcomes)} scenarios generated; results in {cfg.out_dir}")
    return summary.exit_code


def cmd_compile(args) -> int:
    plan = parse_plain(Path(args.nodes).read_text(), Path(args.edges).read_text())
    net = compile_plan(plan, CompileOptions(lane_width=args.lane_width))
    for w in net.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _write_or_print(serialize_net(net), args.out)
    st = network_stats(net)
    print(f"compiled {st.total_edges} edges, {st.total_lanes} lanes, {len(net.junctions)} junctions, "
          f"scene {classify_scene(net)}", file=sys.stderr)
    return EXIT_OK


def cmd_route(args) -> int:
    net = parse_net(Path(args.net).read_text())
    if args.trips:
        routes, failures = expand_trips(net, parse_trips(Path(args.trips).read_text()))
        if failures:
            raise DiagnosticError([d for _, d in failures])
    else:
        if not (args.from_edge and args.to_edge):
            raise ConfigError("route needs --trips FILE or both --from and --to")
        routes = [shortest_route(net, args.from_edge, args.to_edge, args.id, 0.0, "AV")]
    _write_or_print(serialize_routes(routes), args.out)
    return EXIT_OK


def cmd_randtrips(args) -> int:
    net = parse_net(Path(args.net).read_text())
    trips = random_trips(net, TripGenParams(args.rate, args.horizon, args.seed, not args.all_edges))
    _write_or_print(serialize_trips(trips), args.out)
    return EXIT_OK


def _load_scenario(net_path: str, routes_path: str, av: str | None) -> Scenario:
    net = parse_net(Path(net_path).read_text())
    routes = parse_routes(Path(routes_path).read_text())
    if av is None:
        avs = [r.vehicle_id for r in routes if r.vehicle_kind == "AV"]
        if len(avs) != 1:
            raise ConfigError(f"routes file has {len(avs)} AV vehicles; name one with --av")
        av = avs[0]
    return Scenario(net, tuple(routes), av)


def _sim_config(args) -> SimConfig:
    return SimConfig(dt=args.dt, horizon=args.horizon)


def cmd_simulate(args) -> int:
    sc = _load_scenario(args.net, args.routes, args.av)
    trace = simulate(sc, _sim_config(args), args.policy)
    for e in trace.events:
        print(f"{e.time:.2f},{e.kind},{' '.join(e.vehicles)}")
    if args.trace_out:
        with open(args.trace_out, "w", encoding="utf-8") as fh:
            fh.write("time,id,edge,lane,offset,speed,accel,active\n")
            for t, step in zip(trace.times, trace.states):
                for s in step:
                    fh.write(f"{t:.2f},{s.id},{s.edge},{s.lane},{s.offset:.3f},{s.speed:.3f},{s.accel:.3f},{int(s.active)}\n")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    d = Path(args.scenario_dir)
    sc = _load_scenario(str(d / "net.net.xml"), str(d / "routes.rou.xml"), args.av)
    cfg = _sim_config(args)
    trace = simulate(sc, cfg, args.policy)
    result = {"scenario": asdict(driving_score(trace, sc)), "route_completion": route_completion(trace, sc)}
    if args.baseline:
        base = randomtrip_counterpart(sc, args.seed)
        result["randomtrip"] = asdict(driving_score(simulate(base, cfg, args.policy), base))
    print(json.dumps(result, indent=2))
    return EXIT_OK


def _store(args) -> RagStore:
    if not args.rag_db:
        raise ConfigError("rag commands need --rag-db PATH")
    return RagStore.load(args.rag_db)


def cmd_rag(args) -> int:
    store = _store(args)
    if args.rag_cmd == "add":
        desc = Path(args.description_file).read_text() if args.description_file else args.description
        if not desc:
            raise ConfigError("rag add needs --description or --description-file")
        entry = store.add_text(args.id, desc, Path(args.nodes).read_text(), Path(args.edges).read_text(), args.tag)
        print(f"added {entry.id} ({len(store)} entries)")
    elif args.rag_cmd == "ingest":
        for i, path in enumerate(args.nets):
            eid = args.id if (args.id and len(args.nets) == 1) else None
            entry = ingest_net(store, Path(path).read_text(), eid or Path(path).name.split(".")[0], args.tag)
            print(f"ingested {path} as {entry.id}")
    else:
        for rank, (entry, sim) in enumerate(store.query(args.text, args.k), 1):
            print(f"{rank}\t{entry.id}\t{sim:.6f}")
    return EXIT_OK


def cmd_render(args) -> int:
    net = parse_net(Path(args.net).read_text())
    render_svg(net, args.out, args.lane_width)
    return EXIT_OK


def cmd_crash_report(args) -> int:
    text = sys.stdin.read() if args.report == "-" else Path(args.report).read_text()
    if not text.strip():
        raise ConfigError("crash report is empty")
    v = _merged(args)
    backend = Backend(backend_config(v["backend"], v["endpoint"], v["model"], v["temperature"]))
    out = crash_report(text, backend, Path(v["out"]), v["max_attempts"])
    print("scenario_0: ok" if out.success else f"scenario_0: FAILED ({out.error})")
    return EXIT_OK if out.success else EXIT_FAILED


def cmd_report(args) -> int:
    batches = [(Path(p).stem if Path(p).is_file() else Path(p).name, load_results(p)) for p in args.results]
    report = text_report(batches)
    sys.stdout.write(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(report, encoding="utf-8")
        for p in render_figures(batches, out):
            print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", help="http, replay:DIR or record:DIR")
    p.add_argument("--endpoint", help=f"chat API base URL (default {DEFAULT_ENDPOINT})")
    p.add_argument("--model")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-attempts", type=int, dest="max_attempts")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="flat key = value file; flags override it")


def _sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--av", help="AV vehicle id (default: the vehicle of type AV)")
    p.add_argument("--policy", choices=POLICIES, default="idm_follow")
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--horizon", type=float, default=120.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scenoforge", description="Generate and evaluate driving test scenarios.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="run the generation pipeline for a request")
    g.add_argument("--request")
    g.add_argument("--count", type=int)
    g.add_argument("--scene", help="expected scene type when the request is generic")
    g.add_argument("--seed", type=int)
    g.add_argument("--rag", action="store_true", default=None)
    g.add_argument("--rag-db", dest="rag_db")
    g.add_argument("--jobs", type=int)
    g.add_argument("--av-policy", dest="av_policy", choices=POLICIES)
    g.add_argument("--no-interpreter", action="store_true", dest="no_interpreter", default=None,
                   help="pass the request straight to the generators")
    g.add_argument("--no-compile-check", action="store_true", dest="no_compile_check", default=None,
                   help="accept the first parsed network without compiler feedback")
    g.add_argument("--no-evaluate", action="store_true", dest="no_evaluate", default=None)
    g.add_argument("--no-challenge", action="store_true", dest="no_challenge", default=None,
                   help="skip the simulated AV comparison against RandomTrip traffic")
    _backend_flags(g)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("compile", help="compile node and edge files into a net file")
    c.add_argument("nodes")
    c.add_argument("edges")
    c.add_argument("--out")
    c.add_argument("--lane-width", type=float, default=3.2, dest="lane_width")
    c.set_defaults(func=cmd_compile)

    r = sub.add_parser("route", help="shortest routes for trips or a single origin/destination")
    r.add_argument("net")
    r.add_argument("--trips")
    r.add_argument("--from", dest="from_edge")
    r.add_argument("--to", dest="to_edge")
    r.add_argument("--id", default="v0")
    r.add_argument("--out")
    r.set_defaults(func=cmd_route)

    t = sub.add_parser("randtrips", help="RandomTrip baseline trips")
    t.add_argument("net")
    t.add_argument("--rate", type=float, default=0.1, help="arrivals per second")
    t.add_argument("--horizon", type=float, default=100.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--all-edges", action="store_true", dest="all_edges", help="do not restrict to fringe edges")
    t.add_argument("--out")
    t.set_defaults(func=cmd_randtrips)

    s = sub.add_parser("simulate", help="simulate a net + routes pair and print events")
    s.add_argument("net")
    s.add_argument("routes")
    s.add_argument("--trace-out", dest="trace_out")
    _sim_flags(s)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="driving score of a generated scenario directory")
    e.add_argument("scenario_dir")
    e.add_argument("--baseline", action="store_true", help="also score a RandomTrip counterpart")
    e.add_argument("--seed", type=int, default=0)
    _sim_flags(e)
    e.set_defaults(func=cmd_evaluate)

    rg = sub.add_parser("rag", help="manage the retrieval store")
    rg.add_argument("--rag-db", dest="rag_db")
    rsub = rg.add_subparsers(dest="rag_cmd", required=True)
    ra = rsub.add_parser("add")
    ra.add_argument("nodes")
    ra.add_argument("edges")
    ra.add_argument("--id", required=True)
    ra.add_argument("--description")
    ra.add_argument("--description-file", dest="description_file")
    ra.add_argument("--tag", action="append", default=[])
    rq = rsub.add_parser("query")
    rq.add_argument("text")
    rq.add_argument("-k", type=int, default=3)
    ri = rsub.add_parser("ingest")
    ri.add_argument("nets", nargs="+")
    ri.add_argument("--id")
    ri.add_argument("--tag", action="append", default=[])
    for p in (ra, rq, ri):
        p.add_argument("--rag-db", dest="rag_db", default=argparse.SUPPRESS)
    rg.set_defaults(func=cmd_rag)

    v = sub.add_parser("render", help="bird's-eye SVG of a net file")
    v.add_argument("net")
    v.add_argument("--out", required=True)
    v.add_argument("--lane-width", type=float, default=3.2, dest="lane_width")
    v.set_defaults(func=cmd_render)

    cr = sub.add_parser("crash-report", help="rebuild a scenario from a crash narrative")
    cr.add_argument("--report", required=True, help="report text file, or - for stdin")
    _backend_flags(cr)
    cr.set_defaults(func=cmd_crash_report)

    rp = sub.add_parser("report", help="metric tables and figures from results files")
    rp.add_argument("results", nargs="+", help="results.json files or run directories")
    rp.add_argument("--out", help="directory for report.txt and figures")
    rp.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DiagnosticError as exc:
        _print_diagnostics(exc)
        return EXIT_FAILED
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if args.command == "generate" else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
