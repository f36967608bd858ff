import hashlib
import json
import sys
from pathlib import Path

import pytest

from scenoforge.llm import Backend, BackendConfig
from scenoforge.pipeline import RunConfig, crash_report, run_generate

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

FIXTURES = HERE / "fixtures"
TRANSCRIPTS = FIXTURES / "transcripts"
RAG_STORE = FIXTURES / "rag" / "store.jsonl"
CROWDED_FORK = FIXTURES / "crowded_fork"


def manifest(name: str) -> dict:
    return json.loads((TRANSCRIPTS / name / "fixture.json").read_text(encoding="utf-8"))


def replay(name: str, out_dir: Path, transcript_dir: Path | None = None, **overrides):
    """Run one recorded fixture set through the real pipeline in replay mode."""
    m = manifest(name)
    bcfg = BackendConfig(mode="replay", transcript_dir=transcript_dir or TRANSCRIPTS / name)
    if m["mode"] == "crash":
        text = (TRANSCRIPTS / name / m["report_file"]).read_text(encoding="utf-8")
        return crash_report(text, Backend(bcfg), out_dir, **overrides)
    kwargs = dict(request=m["request"], out_dir=out_dir, backend=bcfg, count=m["count"], rag=m["rag"],
                  rag_db=RAG_STORE if m["rag"] else None, use_interpreter=m["use_interpreter"])
    kwargs.update(overrides)
    return run_generate(RunConfig(**kwargs))


def tree_hash(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode() + b"\0")
            h.update(p.read_bytes() + b"\0")
    return h.hexdigest()


@pytest.fixture(autouse=True)
def _no_api_key(monkeypatch):
    monkeypatch.delenv("SCENOFORGE_API_KEY", raising=False)
