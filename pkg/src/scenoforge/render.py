"""Bird's-eye SVG rendering of a compiled network."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

from .compiler import DEFAULT_OPTIONS
from .geometry import point_at
from .net_model import CompiledNetwork

SCALE = 2.0  # pixels per meter
MARGIN = 10.0  # meters


def _num(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def render_svg_text(net: CompiledNetwork, lane_width: float = DEFAULT_OPTIONS.lane_width,
                    scale: float = SCALE) -> str:
    pts = [p for e in net.edges for l in e.lanes for p in l.shape]
    pts += [p for j in net.junctions for p in (j.shape or (j.pos,))]
    if not pts:
        raise ValueError("cannot render an empty network")
    min_x = min(p.x for p in pts) - MARGIN
    max_x = max(p.x for p in pts) + MARGIN
    min_y = min(p.y for p in pts) - MARGIN
    max_y = max(p.y for p in pts) + MARGIN

    def xy(p) -> str:
        return f"{_num((p.x - min_x) * scale)},{_num((max_y - p.y) * scale)}"

    w, h = _num((max_x - min_x) * scale), _num((max_y - min_y) * scale)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'  <rect width="{w}" height="{h}" fill="#f4f4f0"/>',
        '  <g id="junctions">',
    ]
    for j in net.junctions:
        if j.shape:
            out.append(f'    <polygon class="junction" id={quoteattr(j.id)} points="{" ".join(xy(p) for p in j.shape)}" '
                       f'fill="#9a9a9a"/>')
        else:
            cx, cy = xy(j.pos).split(",")
            out.append(f'    <circle class="junction dead_end" id={quoteattr(j.id)} cx="{cx}" cy="{cy}" '
                       f'r="{_num(lane_width / 2 * scale)}" fill="#9a9a9a"/>')
    out.append("  </g>")
    out.append('  <g id="lanes" fill="none" stroke="#505050" stroke-linejoin="round">')
    for e in net.edges:
        for lane in e.lanes:
            out.append(f'    <polyline class="lane" id={quoteattr(lane.id)} points="{" ".join(xy(p) for p in lane.shape)}" '
                       f'stroke-width="{_num(lane_width * scale)}"/>')
    out.append("  </g>")
    out.append('  <g id="labels" font-family="sans-serif" font-size="12" fill="#1030a0">')
    for e in net.edges:
        mid = point_at(e.lanes[0].shape, e.lanes[0].length / 2)
        x, y = xy(mid).split(",")
        out.append(f'    <text class="edge-label" x="{x}" y="{y}">{escape(e.id)}</text>')
    out.append("  </g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(net: CompiledNetwork, out: Path | str, lane_width: float = DEFAULT_OPTIONS.lane_width) -> Path:
    path = Path(out)
    path.write_text(render_svg_text(net, lane_width), encoding="utf-8")
    return path
