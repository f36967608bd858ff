"""Retrieval store of example road networks keyed by text embeddings."""
from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .compiler import SceneType, classify_scene, junction_roads, plan_from_network
from .geometry import compass, cumulative_turn, start_heading
from .net_model import (
    CompiledNetwork, DiagCode, Diagnostic, DiagnosticError, fmt, parse_net, parse_plain, serialize_plain,
)

LOCAL_DIM = 256
CURVE_THRESHOLD_DEG = 15.0
_TOKEN_RE = re.compile(r"[^a-z0-9]+")


# ---------------------------------------------------------------- embedding


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_RE.split(text.lower()) if t]


def trigrams(token: str) -> list[str]:
    padded = f"<{token}>"
    return [padded[i:i + 3] for i in range(len(padded) - 2)]


class LocalEmbedder:
    """Feature hashing of per-token character trigrams into signed buckets."""

    name = "local"

    def __init__(self, dim: int = LOCAL_DIM):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        self.dim = dim

    def __call__(self, text: str) -> tuple[float, ...]:
        if not text.strip():
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim)
        for tok in tokenize(text):
            for gram in trigrams(tok):
                h = int.from_bytes(hashlib.blake2b(gram.encode(), digest_size=8).digest(), "little")
                vec[h % self.dim] += 1.0 if (h >> 32) & 1 else -1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ValueError(f"text {text[:40]!r} has no embeddable content")
        return tuple(float(x) for x in vec / norm)


class RemoteEmbedder:
    name = "remote"

    def __init__(self, backend):
        self.backend = backend

    def __call__(self, text: str) -> tuple[float, ...]:
        if not text.strip():
            raise ValueError("cannot embed empty text")
        vec = tuple(self.backend.embed(text))
        if not vec or not all(math.isfinite(x) for x in vec) or not any(vec):
            raise ValueError("remote embedding is empty, non-finite or all zero")
        return vec


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    va, vb = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0 or nb == 0:
        raise ValueError("cosine of a zero vector is undefined")
    return float(min(1.0, max(-1.0, np.dot(va, vb) / (na * nb))))


# -------------------------------------------------------------------- store


@dataclass(frozen=True)
class RagEntry:
    id: str
    description: str
    node_text: str
    edge_text: str
    embedding: tuple[float, ...]
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError("entry description must be nonempty")
        object.__setattr__(self, "embedding", tuple(float(x) for x in self.embedding))
        object.__setattr__(self, "tags", tuple(self.tags))
        if not self.embedding or not all(math.isfinite(x) for x in self.embedding) or not any(self.embedding):
            raise ValueError(f"entry '{self.id}' has an empty, non-finite or zero embedding")

    def to_json(self) -> str:
        return json.dumps({
            "id": self.id, "tags": list(self.tags), "description": self.description,
            "embedding": list(self.embedding), "node_text": self.node_text, "edge_text": self.edge_text,
        }, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "RagEntry":
        d = json.loads(line)
        return cls(d["id"], d["description"], d["node_text"], d["edge_text"], tuple(d["embedding"]), tuple(d["tags"]))


class RagStore:
    """Append-ordered entries with write-through persistence to a JSON-lines file."""

    def __init__(self, path: Path | str | None = None, embedder: Callable[[str], tuple[float, ...]] | None = None):
        self.path = Path(path) if path is not None else None
        self.embedder = embedder or LocalEmbedder()
        self._entries: list[RagEntry] = []
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: Path | str, embedder=None) -> "RagStore":
        store = cls(path, embedder)
        p = Path(path)
        if p.exists():
            for n, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    store._append(RagEntry.from_json(line))
                except (KeyError, ValueError) as exc:
                    raise ValueError(f"{p}:{n}: bad store entry: {exc}") from exc
        return store

    @property
    def entries(self) -> tuple[RagEntry, ...]:
        return tuple(self._entries)

    @property
    def dimension(self) -> int | None:
        return len(self._entries[0].embedding) if self._entries else None

    def __len__(self) -> int:
        return len(self._entries)

    def _append(self, entry: RagEntry) -> None:
        if any(e.id == entry.id for e in self._entries):
            raise DiagnosticError([Diagnostic(DiagCode.DuplicateId, f"store already has entry '{entry.id}'", entry.id)])
        if self._entries and len(entry.embedding) != self.dimension:
            raise ValueError(f"entry '{entry.id}' has dimension {len(entry.embedding)}, store uses {self.dimension}")
        self._entries.append(entry)

    def add(self, entry: RagEntry) -> None:
        parse_plain(entry.node_text, entry.edge_text)
        with self._lock:
            self._append(entry)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(entry.to_json() + "\n")

    def add_text(self, entry_id: str, description: str, node_text: str, edge_text: str,
                 tags: Sequence[str] = ()) -> RagEntry:
        entry = RagEntry(entry_id, description, node_text, edge_text, self.embedder(description), tuple(tags))
        self.add(entry)
        return entry

    def compact(self) -> None:
        """Rewrite the backing file from memory, replacing it atomically."""
        if self.path is None:
            return
        with self._lock:
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            tmp.write_text("".join(e.to_json() + "\n" for e in self._entries), encoding="utf-8")
            tmp.replace(self.path)

    def query(self, text: str, k: int = 1) -> list[tuple[RagEntry, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        entries = self.entries
        if not entries:
            raise ValueError("query on an empty store")
        qv = self.embedder(text)
        scored = [(cosine(qv, e.embedding), i, e) for i, e in enumerate(entries)]
        scored.sort(key=lambda t: (-t[0], t[1]))
        return [(e, s) for s, _, e in scored[:k]]


# ------------------------------------------------------------ summarization

_LAYOUTS = {
    SceneType.t_intersection: "T-shaped intersection where a side road meets a through road",
    SceneType.y_intersection: "Y-shaped intersection where roads split at an acute angle",
    SceneType.four_way: "four-way intersection of two crossing roads",
    SceneType.fork: "fork where the main road splits into two at a slight angle",
    SceneType.merge: "merge where two roads join into one",
    SceneType.general: "road network",
}


def _ramp_kind(net: CompiledNetwork) -> str:
    for j in net.junctions:
        roads = junction_roads(net, j.id)
        ins = sum(r.incoming is not None for r in roads)
        outs = sum(r.outgoing is not None for r in roads)
        if ins == 1 and outs == 2:
            return "freeway off-ramp, an exit ramp diverging from the main freeway road"
        if ins == 2 and outs == 1:
            return "freeway on-ramp, an entrance ramp merging into the main freeway road"
    return "freeway ramp"


def layout_phrase(net: CompiledNetwork) -> str:
    scene = classify_scene(net)
    if scene is SceneType.ramp:
        return _ramp_kind(net)
    return _LAYOUTS[scene]


def curve_phrase(shape) -> str:
    turn = cumulative_turn(shape)
    if abs(turn) <= CURVE_THRESHOLD_DEG:
        return "straight"
    side = "left" if turn > 0 else "right"
    return f"curves {side} by {round(abs(turn))}°"


def summarize_network(net: CompiledNetwork) -> str:
    """Deterministic description: layout, segments, connectivity and curve shapes."""
    lanes = sum(e.num_lanes for e in net.edges)
    lines = [
        f"Layout: {layout_phrase(net)}.",
        f"The network has {len(net.edges)} segments with {lanes} lanes in total and {len(net.junctions)} junctions.",
        "Segments:",
    ]
    for e in net.edges:
        label = f"{e.id} ({e.name})" if e.name else e.id
        shape = e.lanes[0].shape
        lines.append(
            f"- {label}: from {e.from_junction} to {e.to_junction}, {round(e.length)} m, {e.num_lanes} "
            f"lane{'s' if e.num_lanes != 1 else ''}, {fmt(e.speed)} m/s, heading {compass(start_heading(shape))}, "
            f"{curve_phrase(shape)}."
        )
    lines.append("Connectivity:")
    for e in net.edges:
        nxt = sorted(net.successors[e.id])
        lines.append(f"- {e.id} continues to {', '.join(nxt)}." if nxt else f"- {e.id} leaves the network.")
    return "\n".join(lines) + "\n"


def summarize_with_vlm(backend, net: CompiledNetwork, svg_text: str, channel: str = "summarize") -> str:
    """Free-text summary from a multimodal model given the rendering and the deterministic facts."""
    from .agents import load_template

    facts = summarize_network(net) + "\nBird's-eye view (SVG):\n" + svg_text
    conv = load_template("summarizer").render(net_summary=facts)
    return backend.complete(conv, channel)


def ingest_net(store: RagStore, net_text: str, entry_id: str | None = None, tags: Sequence[str] = (),
               summarizer: Callable[[CompiledNetwork], str] = summarize_network) -> RagEntry:
    net = parse_net(net_text)
    plan = plan_from_network(net)
    node_text, edge_text = serialize_plain(plan)
    description = summarizer(net)
    eid = entry_id or f"net{len(store)}"
    return store.add_text(eid, description, node_text, edge_text, tags)
