"""A scripted stand-in for an OpenAI-compatible chat server.

Replies are queued per pipeline stage; the stage of an incoming request is
recognized from the system prompt.  Served through ``httpx.MockTransport``
so the real http/record code paths run unchanged.
"""
from __future__ import annotations

import json

import httpx

STAGE_MARKERS = {
    "interpret": "interpreter of a driving-scenario generator",
    "net": "You generate road networks",
    "vehicles": "You place vehicles",
    "evaluate": "You review generated driving scenarios",
    "summarize": "You describe road networks",
}

PASS_VERDICT = "```verdict\nPASS\nThe background vehicles interact with the AV as requested.\n```\n"


def stage_of(messages: list[dict]) -> str:
    system = messages[0]["content"] if messages else ""
    for stage, marker in STAGE_MARKERS.items():
        if marker in system:
            return stage
    raise ValueError(f"unrecognized prompt: {system[:60]!r}")


class ScriptedLLM:
    def __init__(self, script: dict[str, list[str]] | None = None, default_pass: bool = True):
        self.queues = {k: list(v) for k, v in (script or {}).items()}
        self.default_pass = default_pass
        self.requests: list[dict] = []
        self.embeddings: dict[str, list[float]] = {}

    def push(self, stage: str, *replies: str) -> None:
        self.queues.setdefault(stage, []).extend(replies)

    def pending(self) -> dict[str, int]:
        return {k: len(v) for k, v in self.queues.items() if v}

    def handler(self, request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        self.requests.append({"path": request.url.path, "headers": dict(request.headers), "body": body})
        if request.url.path.endswith("/embeddings"):
            vec = self.embeddings.get(body["input"], [1.0, 0.0, 0.0])
            return httpx.Response(200, json={"data": [{"embedding": vec}]})
        stage = stage_of(body["messages"])
        queue = self.queues.get(stage) or []
        if queue:
            text = queue.pop(0)
        elif stage == "evaluate" and self.default_pass:
            text = PASS_VERDICT
        else:
            return httpx.Response(500, json={"error": f"no scripted reply left for stage '{stage}'"})
        return httpx.Response(200, json={
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        })

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self.handler)
