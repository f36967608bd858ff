"""Plain-text metric tables and matplotlib figures from batch results files."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence


def _cell(v, digits: int = 2) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, dict):
        return f"{v['mean']:.{digits}f} ± {v['std']:.{digits}f}"
    return f"{v:.{digits}f}"


def _table(title: str, header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    fmt_row = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    lines = [title, "-" * len(title), fmt_row(header)]
    lines += [fmt_row(r) for r in rows]
    return "\n".join(lines) + "\n"


def conformity_table(batches: Sequence[tuple[str, dict]]) -> str:
    header = ["metric", *(name for name, _ in batches)]
    keys = [("scene type", "scene_type_accuracy"), ("number of lanes", "lanes_accuracy"),
            ("number of vehicles", "vehicles_accuracy"), ("success rate (single pass)", "success_rate"),
            ("success rate (with repair)", "success_rate_final")]
    rows = [[label, *(_cell(r["conformity"][k]) for _, r in batches)] for label, k in keys]
    return _table("Conformity of command", header, rows)


def diversity_table(batches: Sequence[tuple[str, dict]]) -> str:
    header = ["metric (mean ± std)", *(name for name, _ in batches)]
    keys = [("number of lanes", "lanes"), ("number of edges", "edges"),
            ("route length (m)", "route_length"), ("number of vehicles", "vehicles")]
    rows = [[label, *(_cell((r["diversity"] or {}).get(k)) for _, r in batches)] for label, k in keys]
    return _table("Diversity of generated scenarios", header, rows)


def challenge_table(batches: Sequence[tuple[str, dict]]) -> str:
    header = ["metric"]
    cols = []
    for name, r in batches:
        for side, label in (("ours", "generated"), ("randomtrip", "RandomTrip")):
            header.append(f"{name} {label}" if len(batches) > 1 else label)
            cols.append(r["challenge"][side])
    keys = [("driving score", "driving_score"), ("total score", "total_score"),
            ("use time (s, simulated)", "use_time"), ("success rate", "success_rate")]
    rows = [[label, *(_cell(c[k]) if c else "n/a" for c in cols)] for label, k in keys]
    return _table("Challenge of generated scenarios", header, rows)


def text_report(results: dict | Sequence[tuple[str, dict]]) -> str:
    batches = [("batch", results)] if isinstance(results, dict) else list(results)
    return "\n".join([conformity_table(batches), diversity_table(batches), challenge_table(batches)])


def load_results(path: Path | str) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "results.json"
    return json.loads(p.read_text(encoding="utf-8"))


def render_figures(batches: Sequence[tuple[str, dict]], out_dir: Path | str) -> list[Path]:
    """Scatter of edge count against network length, and challenge bars; returns the written files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(5, 4))
    for name, r in batches:
        pts = [(s["edges"], s["total_length"]) for s in r["scenarios"] if s.get("edges") is not None]
        if pts:
            ax.scatter(*zip(*pts), label=name, alpha=0.8)
    ax.set_xlabel("number of edges")
    ax.set_ylabel("total edge length (m)")
    ax.set_title("Generated networks")
    if any(s.get("edges") is not None for _, r in batches for s in r["scenarios"]):
        ax.legend()
    fig.tight_layout()
    path = out / "networks.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5))
    names = [name for name, _ in batches]
    x = range(len(names))
    for ax, key, label in ((axes[0], "driving_score", "driving score"), (axes[1], "success_rate", "success rate")):
        for offset, side, side_label in ((-0.2, "ours", "generated"), (0.2, "randomtrip", "RandomTrip")):
            vals = []
            for _, r in batches:
                c = r["challenge"][side]
                v = None if c is None else c[key]
                vals.append(0.0 if v is None else (v["mean"] if isinstance(v, dict) else v))
            ax.bar([i + offset for i in x], vals, width=0.4, label=side_label)
        ax.set_xticks(list(x))
        ax.set_xticklabels(names, rotation=20)
        ax.set_title(label)
    axes[0].legend()
    fig.tight_layout()
    path = out / "challenge.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
