"""Chat backend with live, record and replay modes.

Transcript files hold one pipeline stage each.  Every exchange is stored as::

    REQUEST <n>
    <n bytes: JSON array of {"role", "content"} messages>
    RESPONSE <m>
    <m bytes: assistant text>

with a newline after each payload and byte counts taken over the UTF-8
encoding, so responses may contain anything (including the markers).
"""
from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .net_model import DiagCode, Diagnostic, DiagnosticError

log = logging.getLogger(__name__)

API_KEY_ENV = "SCENOFORGE_API_KEY"
ROLES = ("system", "user", "assistant")
MODES = ("http", "replay", "record")


class BackendError(RuntimeError):
    pass


class TranscriptExhausted(BackendError):
    def __init__(self, channel: str, used: int):
        self.channel = channel
        super().__init__(f"transcript '{channel}' exhausted after {used} entries")


class TranscriptMismatch(BackendError):
    def __init__(self, channel: str, entry: int, message_index: int, detail: str = ""):
        self.channel = channel
        self.entry = entry
        self.message_index = message_index
        super().__init__(
            f"transcript '{channel}' entry {entry}: request differs at message {message_index}"
            + (f" ({detail})" if detail else "")
        )


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role '{self.role}'")
        if not self.content:
            raise ValueError("message content must be nonempty")

    def to_json(self) -> dict:
        return {"role": self.role, "content": self.content}


Conversation = Sequence[ChatMessage]


def check_conversation(conv: Conversation) -> None:
    if conv and conv[0].role != "system":
        raise ValueError("a conversation must start with a system message")


@dataclass(frozen=True)
class BackendConfig:
    mode: str = "replay"
    endpoint: str | None = None
    model_name: str = "gpt-4"
    temperature: float = 0.2
    transcript_dir: Path | None = None
    timeout: float = 60.0
    max_retries: int = 3
    embedding_model: str = "text-embedding-ada-002"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"backend mode must be one of {MODES}, got '{self.mode}'")
        if self.mode in ("replay", "record") and self.transcript_dir is None:
            raise ValueError(f"{self.mode} mode needs a transcript directory")
        if self.mode in ("http", "record") and not self.endpoint:
            raise ValueError(f"{self.mode} mode needs an endpoint")
        if not 0 <= self.temperature <= 2:
            raise ValueError("temperature must be within [0, 2]")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.transcript_dir is not None:
            object.__setattr__(self, "transcript_dir", Path(self.transcript_dir))


# ------------------------------------------------------------ transcripts


def encode_entry(messages: Conversation, response: str) -> bytes:
    req = json.dumps([m.to_json() for m in messages], ensure_ascii=False, indent=1).encode()
    resp = response.encode()
    return b"REQUEST %d\n%s\nRESPONSE %d\n%s\n" % (len(req), req, len(resp), resp)


def decode_transcript(data: bytes) -> list[tuple[list[ChatMessage], str]]:
    entries = []
    pos = 0

    def take(marker: bytes) -> bytes:
        nonlocal pos
        eol = data.index(b"\n", pos)
        head = data[pos:eol].split(b" ")
        if len(head) != 2 or head[0] != marker:
            raise ValueError(f"transcript corrupt at byte {pos}: expected {marker.decode()}")
        n = int(head[1])
        payload = data[eol + 1:eol + 1 + n]
        if len(payload) != n or data[eol + 1 + n:eol + 2 + n] != b"\n":
            raise ValueError(f"transcript corrupt at byte {pos}: truncated payload")
        pos = eol + 2 + n
        return payload

    while pos < len(data):
        req = json.loads(take(b"REQUEST").decode())
        resp = take(b"RESPONSE").decode()
        entries.append(([ChatMessage(m["role"], m["content"]) for m in req], resp))
    return entries


def _normalized(text: str) -> str:
    return " ".join(text.split())


def compare_requests(recorded: Conversation, live: Conversation) -> tuple[int, str] | None:
    """Index and reason of the first message that differs, ignoring whitespace runs."""
    for i, (a, b) in enumerate(zip(recorded, live)):
        if a.role != b.role:
            return i, f"role {a.role!r} != {b.role!r}"
        if _normalized(a.content) != _normalized(b.content):
            return i, "content differs"
    if len(recorded) != len(live):
        return min(len(recorded), len(live)), f"{len(recorded)} recorded vs {len(live)} live messages"
    return None


def channel_path(root: Path, channel: str) -> Path:
    parts = [p for p in channel.split("/") if p]
    if not parts or any(p in (".", "..") for p in parts):
        raise ValueError(f"bad transcript channel '{channel}'")
    return root.joinpath(*parts).with_suffix(".transcript")


# ---------------------------------------------------------------- backend


class Backend:
    """One backend per run; replay cursors are kept per channel, never shared across channels."""

    def __init__(self, cfg: BackendConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        self._transport = transport
        self._sleep = sleep
        self._client: httpx.Client | None = None
        self._lock = threading.Lock()
        self._replay: dict[str, list] = {}
        self._cursor: dict[str, int] = {}
        self.calls: dict[str, int] = {}

    def _http(self) -> httpx.Client:
        if self._client is None:
            headers = {}
            key = os.environ.get(API_KEY_ENV)
            if key:
                headers["Authorization"] = f"Bearer {key}"
            self._client = httpx.Client(base_url=self.cfg.endpoint.rstrip("/"), headers=headers,
                                        timeout=self.cfg.timeout, transport=self._transport)
        return self._client

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None

    def post_json(self, path: str, body: dict) -> dict:
        delay = 0.5
        last: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self._sleep(delay)
                delay *= 2
            try:
                resp = self._http().post(path, json=body)
            except httpx.TransportError as exc:
                last = exc
                log.warning("%s failed (%s), attempt %d", path, exc, attempt + 1)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = BackendError(f"{path} returned HTTP {resp.status_code}")
                log.warning("%s returned %d, attempt %d", path, resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"{path} returned HTTP {resp.status_code}: {resp.text[:200]}")
            return resp.json()
        raise BackendError(f"{path} failed after {self.cfg.max_retries + 1} tries: {last}")

    def _chat_http(self, conv: Conversation, temperature: float) -> str:
        body = {
            "model": self.cfg.model_name,
            "messages": [m.to_json() for m in conv],
            "temperature": temperature,
        }
        data = self.post_json("/chat/completions", body)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat response: {str(data)[:200]}") from exc

    def _next_replay(self, channel: str, conv: Conversation) -> str:
        with self._lock:
            if channel not in self._replay:
                path = channel_path(self.cfg.transcript_dir, channel)
                self._replay[channel] = decode_transcript(path.read_bytes()) if path.exists() else []
                self._cursor[channel] = 0
            entries = self._replay[channel]
            i = self._cursor[channel]
            if i >= len(entries):
                raise TranscriptExhausted(channel, len(entries))
            self._cursor[channel] = i + 1
        recorded, response = entries[i]
        diff = compare_requests(recorded, conv)
        if diff is not None:
            raise TranscriptMismatch(channel, i, *diff)
        return response

    def complete(self, conv: Conversation, channel: str, temperature: float | None = None) -> str:
        check_conversation(conv)
        temp = self.cfg.temperature if temperature is None else temperature
        with self._lock:
            self.calls[channel] = self.calls.get(channel, 0) + 1
        if self.cfg.mode == "replay":
            return self._next_replay(channel, conv)
        text = self._chat_http(conv, temp)
        if self.cfg.mode == "record":
            path = channel_path(self.cfg.transcript_dir, channel)
            with self._lock:
                path.parent.mkdir(parents=True, exist_ok=True)
                with open(path, "ab") as fh:
                    fh.write(encode_entry(conv, text))
        return text

    def embed(self, text: str) -> list[float]:
        if self.cfg.mode == "replay":
            raise BackendError("remote embeddings are not available in replay mode")
        data = self.post_json("/embeddings", {"model": self.cfg.embedding_model, "input": text})
        try:
            return [float(x) for x in data["data"][0]["embedding"]]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed embeddings response: {str(data)[:200]}") from exc


# ------------------------------------------------------------ fenced blocks

FENCE = "```"


def extract_tagged_blocks(text: str, tag: str) -> list[str]:
    """Inner text of every fenced block labelled ``tag``, in order.

    Fences of other labels are skipped as a whole, so a tag mentioned inside
    them does not count.  An unclosed ``tag`` fence raises a FormatError
    diagnostic naming its character offset.
    """
    blocks: list[str] = []
    open_label: str | None = None
    open_at = 0
    buf: list[str] = []
    offset = 0
    for line in text.splitlines(keepends=True):
        stripped = line.strip()
        if open_label is None:
            if stripped.startswith(FENCE):
                open_label = stripped[len(FENCE):].strip()
                open_at = offset
                buf = []
        elif stripped == FENCE:
            if open_label == tag:
                blocks.append("".join(buf))
            open_label = None
        else:
            buf.append(line)
        offset += len(line)
    if open_label == tag:
        raise DiagnosticError(
            [Diagnostic(DiagCode.FormatError, f"```{tag} fence opened at offset {open_at} is never closed", tag)],
            response=text,
        )
    return blocks


def single_block(text: str, tag: str) -> str:
    blocks = extract_tagged_blocks(text, tag)
    if len(blocks) != 1:
        raise DiagnosticError(
            [Diagnostic(DiagCode.FormatError, f"expected exactly one ```{tag} block, found {len(blocks)}", tag)],
            response=text,
        )
    return blocks[0]
