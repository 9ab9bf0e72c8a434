"""SVG drawings of a map with one time-parameterised path per robot."""
from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape, quoteattr

from .world import BLOCKED, Graph

SCALE = 40.0
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#17becf", "#bcbd22", "#7f7f7f")


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


def _bounds(graph: Graph, tracks) -> tuple[float, float, float, float]:
    xs = [x for x, _ in graph.pos] + [p[0] for pts in tracks.values() for p in pts]
    ys = [y for _, y in graph.pos] + [p[1] for pts in tracks.values() for p in pts]
    if graph.grid is not None:
        xs += [0.0, float(graph.grid.width)]
        ys += [0.0, float(graph.grid.height)]
    if not xs:
        return 0.0, 0.0, 1.0, 1.0
    return min(xs) - 0.5, min(ys) - 0.5, max(xs) + 0.5, max(ys) + 0.5


def render_svg(graph: Graph, tracks: Mapping[str, Sequence[tuple[float, float, float]]],
               title: str = "") -> str:
    """``tracks``: robot id -> [(x, y, t)].

    Map features use rect/line/circle only, so every <path> is a robot. Each
    path carries its timestamps in ``data-t`` and an <animateMotion> that
    replays it on the schedule's clock.
    """
    x0, y0, x1, y1 = _bounds(graph, tracks)
    sx = lambda x: _fmt((x - x0) * SCALE)
    sy = lambda y: _fmt((y - y0) * SCALE)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt((x1 - x0) * SCALE)}" '
        f'height="{_fmt((y1 - y0) * SCALE)}">',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append('<g id="map">')
    if graph.grid is not None:
        for r, row in enumerate(graph.grid.rows):
            for c, ch in enumerate(row):
                if ch in BLOCKED:
                    out.append(f'<rect x="{sx(c)}" y="{sy(r)}" width="{_fmt(SCALE)}" height="{_fmt(SCALE)}" '
                               'fill="#444"/>')
    for u, v in graph.edges():
        (ax, ay), (bx, by) = graph.pos[u], graph.pos[v]
        out.append(f'<line x1="{sx(ax)}" y1="{sy(ay)}" x2="{sx(bx)}" y2="{sy(by)}" stroke="#ccc" stroke-width="1"/>')
    for x, y in graph.pos:
        out.append(f'<circle cx="{sx(x)}" cy="{sy(y)}" r="2" fill="#999"/>')
    out.append("</g>")
    out.append('<g id="robots">')
    for k, (rid, pts) in enumerate(tracks.items()):
        if not pts:
            continue
        color = PALETTE[k % len(PALETTE)]
        d = " ".join(("M" if i == 0 else "L") + f"{sx(x)},{sy(y)}" for i, (x, y, _) in enumerate(pts))
        times = " ".join(_fmt(t) for _, _, t in pts)
        out.append(f'<path id="robot-{k}" d="{d}" fill="none" stroke="{color}" '
                   f'stroke-width="2" data-robot={quoteattr(rid)} data-t="{times}"/>')
        end = pts[-1][2]
        x, y, _ = pts[0]
        anim = ""
        if end > 0:
            key_times = ";".join(_fmt(t / end) for _, _, t in pts)
            anim = (f'<animateMotion dur="{_fmt(end)}s" fill="freeze" calcMode="linear" '
                    f'keyPoints="{_key_points(pts)}" keyTimes="{key_times}">'
                    f'<mpath href="#robot-{k}"/></animateMotion>')
        out.append(f'<circle r="5" fill="{color}">{anim}</circle>'
                   if anim else f'<circle r="5" fill="{color}" cx="{sx(x)}" cy="{sy(y)}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _key_points(pts) -> str:
    """Fraction of the path length covered at each waypoint."""
    acc = [0.0]
    for (ax, ay, _), (bx, by, _) in zip(pts, pts[1:]):
        acc.append(acc[-1] + ((bx - ax) ** 2 + (by - ay) ** 2) ** 0.5)
    total = acc[-1]
    if total <= 0:
        return ";".join("0" for _ in pts)
    return ";".join(_fmt(a / total) for a in acc)


def tracks_from_records(records: Sequence[dict]) -> dict[str, list[tuple[float, float, float]]]:
    """Simulation log records -> per-robot tracks, dropping ticks where a robot did not move."""
    out: dict[str, list[tuple[float, float, float]]] = {}
    for rec in records:
        pts = out.setdefault(rec["robot"], [])
        p = (rec["x"], rec["y"], rec["t"])
        if len(pts) >= 2 and pts[-1][:2] == p[:2] and pts[-2][:2] == p[:2]:
            pts[-1] = p
        else:
            pts.append(p)
    return out
