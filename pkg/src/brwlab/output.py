"""Deterministic file emission: CSV/JSON text and a small static SVG line plot."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .rates import RateCurve

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
WIDTH, HEIGHT, MARGIN = 640, 420, 50


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: Path, obj) -> Path:
    return write_text(path, dumps_json(obj))


def _plain(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def rate_svg(curves: Sequence[RateCurve], title: str = "") -> str:
    """Line plot of rate curves; infinite stretches are drawn as dashed segments along the top edge."""
    finite = [v for c in curves for v in c.values if math.isfinite(v)]
    xs = [x for c in curves for x in c.x_grid]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_lo = min(finite + [0.0])
    y_hi = max(finite + [1.0])
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    y_hi += 0.05 * (y_hi - y_lo)

    def px(x):
        return MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2 * MARGIN)

    def py(y):
        return HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2 * MARGIN)

    top = py(y_hi)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{MARGIN}" y1="{_fmt(py(y_lo))}" x2="{WIDTH - MARGIN}" y2="{_fmt(py(y_lo))}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<text x="{MARGIN}" y="{MARGIN - 20}" font-size="14">{title}</text>',
        f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 18}" font-size="11">{x_lo:.4g}</text>',
        f'<text x="{WIDTH - MARGIN}" y="{HEIGHT - MARGIN + 18}" font-size="11" text-anchor="end">{x_hi:.4g}</text>',
        f'<text x="{MARGIN - 6}" y="{_fmt(top + 4)}" font-size="11" text-anchor="end">{y_hi:.4g}</text>',
    ]
    for i, curve in enumerate(curves):
        color = PALETTE[i % len(PALETTE)]
        segment: list[str] = []
        runs: list[tuple[str, list[str]]] = []
        kind_of = None
        for x, v in zip(curve.x_grid, curve.values):
            kind = "inf" if math.isinf(v) and v > 0 else ("nan" if not math.isfinite(v) else "fin")
            if kind != kind_of and segment:
                runs.append((kind_of, segment))
                segment = []
            kind_of = kind
            y = top if kind == "inf" else (py(v) if kind == "fin" else None)
            if y is not None:
                segment.append(f"{_fmt(px(x))},{_fmt(y)}")
        if segment:
            runs.append((kind_of, segment))
        for kind, pts in runs:
            if kind == "nan" or not pts:
                continue
            dash = ' stroke-dasharray="6,4"' if kind == "inf" else ""
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{" ".join(pts)}"/>')
        parts.append(
            f'<text x="{WIDTH - MARGIN}" y="{MARGIN + 14 * i}" font-size="11" fill="{color}" text-anchor="end">{curve.kind.value}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
