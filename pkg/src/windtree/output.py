"""Deterministic output writers: trajectory CSV, JSON-lines records, SVG
figures, and run manifests.

All serialization is canonical (sorted keys, fixed separators, repr floats)
so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, List, Optional, Sequence, Tuple

from . import __version__
from .flow import Event, FloatEngine
from .table import Table


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_jsonl(records: Iterable[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_record(rec) + "\n")


def trajectory_rows(events: Sequence[Event],
                    directions: Sequence[Tuple[float, float]]) -> List[list]:
    """CSV rows: time, x, y, dx, dy, kind, site.  Directions are the motion
    after the event (post-reflection for collisions)."""
    rows = []
    for ev, d in zip(events, directions):
        site = f"{ev.site[0]} {ev.site[1]}" if ev.site is not None else ""
        rows.append([repr(float(ev.time)), repr(float(ev.point[0])),
                     repr(float(ev.point[1])), repr(float(d[0])),
                     repr(float(d[1])), ev.kind if not ev.reason
                     else f"{ev.kind}:{ev.reason}", site])
    return rows


def write_trajectory_csv(events, directions, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "x", "y", "dx", "dy", "kind", "site"])
        writer.writerows(trajectory_rows(events, directions))


# ---------------------------------------------------------------------------
# SVG


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def trajectory_svg(table: Table, points: Sequence[Tuple[float, float]],
                   window: Tuple[float, float, float, float],
                   width_px: int = 640) -> str:
    """Obstacles of the window plus the trajectory polyline, as an SVG
    document (y axis flipped to the usual math orientation)."""
    x0, y0, x1, y1 = window
    if not (x1 > x0 and y1 > y0):
        raise ValueError("window must have positive extent")
    scale = width_px / (x1 - x0)
    height_px = (y1 - y0) * scale

    def tx(p):
        return ((p[0] - x0) * scale, (y1 - p[1]) * scale)

    out = io.StringIO()
    out.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" '
              f'width="{_fmt(width_px)}" height="{_fmt(height_px)}" '
              f'viewBox="0 0 {_fmt(width_px)} {_fmt(height_px)}">\n')
    out.write('<rect width="100%" height="100%" fill="white"/>\n')

    eng = FloatEngine(table)
    drawn = set()
    for i in range(math.floor(x0) - 1, math.ceil(x1) + 2):
        for j in range(math.floor(y0) - 1, math.ceil(y1) + 2):
            for shape in eng.shapes_for_cell((i, j)):
                key = shape[:5]
                if key in drawn:
                    continue
                drawn.add(key)
                if shape[0] == "rect":
                    (px, py) = tx((shape[1], shape[4]))
                    w = (shape[3] - shape[1]) * scale
                    h = (shape[4] - shape[2]) * scale
                    out.write(f'<rect x="{_fmt(px)}" y="{_fmt(py)}" '
                              f'width="{_fmt(w)}" height="{_fmt(h)}" '
                              f'fill="none" stroke="black" stroke-width="1"/>\n')
                else:
                    (cx, cy) = tx((shape[1], shape[2]))
                    out.write(f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" '
                              f'r="{_fmt(shape[3] * scale)}" fill="none" '
                              f'stroke="black" stroke-width="1"/>\n')

    if points:
        coords = " ".join(f"{_fmt(tx(p)[0])},{_fmt(tx(p)[1])}" for p in points)
        out.write(f'<polyline points="{coords}" fill="none" stroke="#c00000" '
                  f'stroke-width="1.2"/>\n')
    out.write("</svg>\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# Run manifests


def make_manifest(command: str, request: dict, endpoint: str,
                  outputs: Sequence[str], wall_time_s: float) -> dict:
    """Everything needed to reproduce a run bit-for-bit: the endpoint and
    the full request payload (config snapshot included).  ``wall_time_s``
    is informational and excluded from reproducibility comparisons."""
    return {"command": command, "endpoint": endpoint, "request": request,
            "outputs": list(outputs), "tool_version": __version__,
            "wall_time_s": wall_time_s}


def write_manifest(manifest: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def read_manifest(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
