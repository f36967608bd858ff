"""Prompt templates and the four LLM agents, plus the bounded repair loop."""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Sequence

import yaml

from .compiler import SceneType
from .llm import Backend, ChatMessage, extract_tagged_blocks, single_block
from .net_model import (
    CompiledNetwork, DiagCode, Diagnostic, DiagnosticError, NetworkPlan, Trip, fmt, parse_plain, parse_trips,
)
from .compiler import diagnostics_to_feedback
from .scenario import Scenario, ScenarioDescription

PLACEHOLDERS = ("request", "description", "examples", "feedback", "net_summary", "count")
_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
_SECTION_RE = re.compile(r"^\[(system|user)\]\s*$", re.M)

INTERPRET_TEMPERATURE = 0.7
GENERATE_TEMPERATURE = 0.2
DIGEST_LIMIT = 2000
NO_FEEDBACK = "(none)"
NO_EXAMPLES = "(none)"


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str

    def __post_init__(self):
        for part in (self.system, self.user):
            for ph in _PLACEHOLDER_RE.findall(part):
                if ph not in PLACEHOLDERS:
                    raise ValueError(f"template '{self.name}' uses undeclared placeholder {{{ph}}}")

    @classmethod
    def parse(cls, name: str, body: str) -> "PromptTemplate":
        parts = _SECTION_RE.split(body)
        sections = dict(zip(parts[1::2], parts[2::2]))
        if set(sections) != {"system", "user"}:
            raise ValueError(f"template '{name}' needs one [system] and one [user] section")
        return cls(name, sections["system"].strip(), sections["user"].strip())

    @property
    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.system + self.user))

    def _fill(self, text: str, values: dict[str, str]) -> str:
        def sub(m: re.Match) -> str:
            key = m.group(1)
            if key not in values:
                raise KeyError(f"template '{self.name}' needs a value for {{{key}}}")
            return str(values[key])

        return _PLACEHOLDER_RE.sub(sub, text)

    def render(self, **values: str) -> list[ChatMessage]:
        return [ChatMessage("system", self._fill(self.system, values)),
                ChatMessage("user", self._fill(self.user, values))]


@lru_cache(maxsize=None)
def load_template(name: str) -> PromptTemplate:
    body = resources.files("scenoforge").joinpath("prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return PromptTemplate.parse(name, body)


TEMPLATE_NAMES = ("interpreter", "net_generator", "vehicle_generator", "evaluator", "summarizer")


def _format_error(message: str, subject: str, response: str | None = None) -> DiagnosticError:
    return DiagnosticError([Diagnostic(DiagCode.FormatError, message, subject)], response=response)


# ------------------------------------------------------------- interpreter

_HEADING_RE = re.compile(r"^[ \t]*[#*]*[ \t]*(Description|Reasoning)\b[ \t]*\**[ \t]*(?::|$)", re.M | re.I)


def parse_description(text: str) -> ScenarioDescription:
    heads = {m.group(1).lower(): m for m in _HEADING_RE.finditer(text)}
    missing = [h for h in ("description", "reasoning") if h not in heads]
    if missing:
        raise _format_error(f"response lacks the {' and '.join(s.title() for s in missing)} section", missing[0], text)
    footer_src = single_block(text, "footer")
    try:
        footer = yaml.safe_load(footer_src)
    except yaml.YAMLError as exc:
        raise _format_error(f"footer is not valid YAML: {exc}", "footer", text) from exc
    if not isinstance(footer, dict):
        raise _format_error("footer must be a key/value block", "footer", text)
    try:
        scene = SceneType(str(footer.get("scene_type", "")).strip())
    except ValueError:
        raise _format_error(f"footer scene_type '{footer.get('scene_type')}' is not a known scene type",
                            "scene_type", text) from None
    count = footer.get("vehicle_count")
    if not isinstance(count, int) or isinstance(count, bool) or count < 1:
        raise _format_error(f"footer vehicle_count '{count}' must be a positive integer", "vehicle_count", text)
    lanes = footer.get("lanes") or {}
    if not isinstance(lanes, dict) or not all(
        isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in lanes.values()
    ):
        raise _format_error("footer lanes must map road names to positive lane counts", "lanes", text)
    d, r = heads["description"], heads["reasoning"]
    body = text[d.end():r.start()] if d.start() < r.start() else text[d.end():]
    if not body.strip("\n :*#"):
        raise _format_error("Description section is empty", "description", text)
    narrative = text[:text.index("```footer")].strip()
    return ScenarioDescription(narrative, scene, tuple((str(k), v) for k, v in lanes.items()), count, text)


def interpret_one(backend: Backend, request: str, channel: str) -> ScenarioDescription:
    conv = load_template("interpreter").render(request=request)
    text = backend.complete(conv, channel, INTERPRET_TEMPERATURE)
    return parse_description(text)


def interpret(backend: Backend, request: str, k: int, channel_prefix: str = "scenario_{i}") -> list[ScenarioDescription]:
    """k independent interpreter calls; invalid replies are reported together, keyed by index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out: list[ScenarioDescription] = []
    diags: list[Diagnostic] = []
    for i in range(k):
        try:
            out.append(interpret_one(backend, request, channel_prefix.format(i=i) + "/interpret"))
        except DiagnosticError as exc:
            diags.extend(Diagnostic(d.code, d.message, f"description[{i}]") for d in exc.diagnostics)
    if diags:
        raise DiagnosticError(diags)
    return out


# ------------------------------------------------------------ net generator


@dataclass(frozen=True)
class RagExample:
    description: str
    node_text: str
    edge_text: str
    entry_id: str = ""


def format_examples(examples: Sequence[RagExample]) -> str:
    if not examples:
        return NO_EXAMPLES
    parts = []
    for ex in examples:
        parts.append(f"{ex.description.strip()}\n```nodes\n{ex.node_text.rstrip()}\n```\n```edges\n{ex.edge_text.rstrip()}\n```")
    return "\n\n".join(parts)


def net_prompt(description: str, examples: Sequence[RagExample] = (), feedback: str | None = None) -> list[ChatMessage]:
    return load_template("net_generator").render(
        description=description, examples=format_examples(examples), feedback=feedback or NO_FEEDBACK,
    )


def parse_net_response(text: str) -> NetworkPlan:
    nodes = single_block(text, "nodes")
    edges = single_block(text, "edges")
    try:
        return parse_plain(nodes, edges)
    except DiagnosticError as exc:
        raise DiagnosticError(exc.diagnostics, response=text) from None


def generate_net(backend: Backend, description: str, examples: Sequence[RagExample] = (),
                 feedback: str | None = None, channel: str = "net") -> tuple[str, NetworkPlan]:
    text = backend.complete(net_prompt(description, examples, feedback), channel, GENERATE_TEMPERATURE)
    return text, parse_net_response(text)


# -------------------------------------------------------- vehicle generator


def net_digest(net: CompiledNetwork) -> str:
    """Edge ids, lengths and connectivity, one edge per line."""
    lines = []
    for e in net.edges:
        name = f" ({e.name})" if e.name else ""
        nxt = ", ".join(sorted(net.successors[e.id])) or "nothing (network exit)"
        lines.append(
            f"- edge {e.id}{name}: {e.from_junction} -> {e.to_junction}, {fmt(e.length)} m, "
            f"{e.num_lanes} lane(s), {fmt(e.speed)} m/s; continues to {nxt}"
        )
    return "\n".join(lines)


def vehicles_prompt(description: str, net_summary: str, count: int | None,
                    feedback: str | None = None) -> list[ChatMessage]:
    if not net_summary.strip():
        raise ValueError("net_summary must be nonempty")
    return load_template("vehicle_generator").render(
        description=description, net_summary=net_summary,
        count=str(count) if count is not None else "as many as the scenario needs",
        feedback=feedback or NO_FEEDBACK,
    )


def parse_vehicles_response(text: str, count: int | None) -> list[Trip]:
    block = single_block(text, "trips")
    try:
        trips = parse_trips(block)
    except DiagnosticError as exc:
        raise DiagnosticError(exc.diagnostics, response=text) from None
    diags = []
    avs = [t for t in trips if t.vehicle_kind == "AV"]
    if len(avs) != 1:
        diags.append(Diagnostic(DiagCode.CountMismatch, f"expected exactly 1 AV trip, got {len(avs)}", "AV"))
    if count is not None and len(trips) != count:
        diags.append(Diagnostic(DiagCode.CountMismatch, f"expected {count} trips, got {len(trips)}", "trips"))
    if diags:
        raise DiagnosticError(diags, response=text)
    return trips


def generate_vehicles(backend: Backend, description: str, net_summary: str, count: int | None,
                      feedback: str | None = None, channel: str = "vehicles") -> tuple[str, list[Trip]]:
    text = backend.complete(vehicles_prompt(description, net_summary, count, feedback), channel, GENERATE_TEMPERATURE)
    return text, parse_vehicles_response(text, count)


# ---------------------------------------------------------------- evaluator


@dataclass(frozen=True)
class Verdict:
    passed: bool
    reasoning: str

    def __post_init__(self):
        if not self.passed and not self.reasoning.strip():
            raise ValueError("a failing verdict needs reasoning")


_VERDICT_RE = re.compile(r"\b(PASS|FAIL)\b")


def parse_verdict(text: str) -> Verdict:
    blocks = extract_tagged_blocks(text, "verdict")
    if not blocks:
        raise _format_error("response has no ```verdict block", "verdict", text)
    body = blocks[0]
    m = _VERDICT_RE.search(body)
    if m is None:
        raise _format_error("verdict block contains neither PASS nor FAIL", "verdict", text)
    reasoning = (body[:m.start()] + body[m.end():]).strip()
    passed = m.group(1) == "PASS"
    if not passed and not reasoning:
        raise _format_error("FAIL verdict without reasoning", "verdict", text)
    return Verdict(passed, reasoning)


def scenario_digest(scenario: Scenario, scene_type: SceneType | str) -> str:
    lines = [f"scene type: {scene_type}", f"AV: {scenario.av_id}", "vehicles:"]
    for r in sorted(scenario.routes, key=lambda r: (r.depart_time, r.vehicle_id)):
        lines.append(f"- {r.vehicle_id} ({r.vehicle_kind}) departs {fmt(r.depart_time)} s via {' '.join(r.edges)}")
    text = "\n".join(lines)
    if len(text) > DIGEST_LIMIT:
        text = text[:DIGEST_LIMIT - 4] + "\n..."
    return text


def evaluate_scenario(backend: Backend, digest: str, intent: str, channel: str = "evaluate") -> Verdict:
    conv = load_template("evaluator").render(request=intent, description=digest)
    return parse_verdict(backend.complete(conv, channel, GENERATE_TEMPERATURE))


# -------------------------------------------------------------- repair loop


@dataclass(frozen=True)
class RepairConfig:
    max_attempts: int = 3

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class Attempt:
    number: int
    response_digest: str
    diagnostics: tuple[Diagnostic, ...]
    feedback: str | None = None

    @property
    def ok(self) -> bool:
        return not self.diagnostics


class ExhaustedAttempts(Exception):
    def __init__(self, attempts: Sequence[Attempt]):
        self.attempts = list(attempts)
        last = self.attempts[-1].diagnostics if self.attempts else ()
        super().__init__(f"no valid result after {len(self.attempts)} attempts; last: "
                         + "; ".join(str(d) for d in last))


def response_digest(text: str | None) -> str:
    return hashlib.sha256((text or "").encode()).hexdigest()[:16]


def repair_loop(generate: Callable[[str | None], tuple[str, object]],
                check: Callable[[object], Sequence[Diagnostic]],
                cfg: RepairConfig = RepairConfig(),
                first_feedback: str | None = None,
                log: list[Attempt] | None = None):
    """Run generate/check until check passes, feeding diagnostics back as text.

    ``generate`` may raise DiagnosticError for replies it cannot parse; those
    count as failed attempts like any failed check.  Passing an existing
    ``log`` continues it: earlier attempts count against ``max_attempts``.
    Returns (value, attempts).
    """
    attempts: list[Attempt] = [] if log is None else log
    feedback = first_feedback
    while len(attempts) < cfg.max_attempts:
        try:
            text, value = generate(feedback)
            diags = tuple(check(value))
        except DiagnosticError as exc:
            text, value, diags = exc.response, None, tuple(exc.diagnostics)
        attempts.append(Attempt(len(attempts) + 1, response_digest(text), diags, feedback))
        if not diags:
            return value, attempts
        feedback = diagnostics_to_feedback(diags)
    raise ExhaustedAttempts(attempts)


# ------------------------------------------------------------- crash reports

_VEHICLE_RE = re.compile(r"\bVehicle\s+#?(\d+)\b", re.I)


def count_report_vehicles(report: str) -> int:
    return len(set(_VEHICLE_RE.findall(report)))
