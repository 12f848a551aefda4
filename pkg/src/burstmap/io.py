"""File emission: CSV tables, JSON run manifests, and static SVG plots.

Every run artifact is deterministic: floats render with 17 significant
digits (enough to round-trip doubles), JSON uses sorted keys, and the
SVG writer formats coordinates with fixed precision so identical
inputs give identical bytes.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .model import (
    BursterParams,
    Geometry,
    Y_FOLD,
    _active_speed,
    jump_up,
)


def fmt(x) -> str:
    """Render one CSV cell: full-precision floats, plain ints, text."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path: str, header: list[str], rows) -> None:
    """Comma-separated table with a header row and full-precision floats."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(x) for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def validate_bursting(params: BursterParams) -> None:
    """Reject parameter sets that cannot sustain a relaxation cycle.

    Bursting needs the slow drift to carry a resting cell up to the
    jump-up point and to pull a spiking cell back down to the fold;
    the violated sign condition is named in the error.
    """
    try:
        yj = jump_up(Y_FOLD, params)
    except (ValueError, OverflowError) as exc:
        raise ValueError(
            "rest-branch drift a - b*y must stay positive up to the "
            f"jump-up point; parameters {params} stall the silent "
            "passage") from exc
    if params.b > 0.0 and params.a - params.b * yj <= 0.0:
        raise ValueError(
            "rest-branch drift a - b*y must stay positive up to the "
            f"jump-up point y = {yj:.6g}; got a - b*y = "
            f"{params.a - params.b * yj:.6g}")
    n = 64
    for i in range(n + 1):
        y = Y_FOLD + i * (yj - Y_FOLD) / n
        if _active_speed(y, params) >= 0.0:
            raise ValueError(
                "spiking-branch drift a - r_P(y)^2 - b*y must stay "
                f"negative on the active passage; it reaches "
                f"{_active_speed(y, params) / params.eps:.6g} at "
                f"y = {y:.6g}")


def geometry_record(geom: Geometry) -> dict:
    return {
        "params": {"eps": geom.params.eps, "w": geom.params.w,
                   "a": geom.params.a, "b": geom.params.b},
        "y_jump": geom.y_jump,
        "t_silent": geom.t_silent,
        "t_active": geom.t_active,
        "cycle_time": geom.cycle_time,
        "period": geom.period,
    }


def write_manifest(path: str, config: dict, seed: int,
                   geometry: Geometry | None,
                   error: str | None = None) -> None:
    """Run manifest: resolved config, seed, tool version, derived
    geometry, and the error message when the run failed."""
    from . import __version__
    doc = {
        "config": config,
        "seed": int(seed),
        "version": __version__,
        "geometry": geometry_record(geometry) if geometry else None,
        "error": error,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_config(path: str) -> dict:
    """Read a config file; a saved manifest is accepted and reruns with
    its recorded config and seed."""
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config must be a JSON object")
    if "config" in doc and "version" in doc:
        cfg = dict(doc["config"])
        cfg.setdefault("seed", doc.get("seed"))
        return cfg
    return doc


# --- SVG -----------------------------------------------------------------

_FONT = "font-family=\"Helvetica,Arial,sans-serif\" font-size=\"12\""


@dataclass
class Layer:
    """One renderable dataset: connected segments or marker points."""

    kind: str                      # "line" | "points"
    segments: list = field(default_factory=list)
    color: str = "#1f4e9c"
    width: float = 1.2
    radius: float = 2.0


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = np.linspace(lo, hi, n)
    return [float(t) for t in raw]


def emit_svg(layers: list[Layer], xlim=None, ylim=None, xlabel: str = "",
             ylabel: str = "", title: str = "", width: int = 640,
             height: int = 420) -> str:
    """Render layers into a standalone SVG document.

    Line layers are drawn as one polyline per segment, so callers split
    data at discontinuities and no spurious vertical strokes appear.
    """
    pts = [np.asarray(seg, float).reshape(-1, 2)
           for ly in layers for seg in ly.segments]
    pts = [p for p in pts if len(p)]
    if not pts:
        raise ValueError("nothing to plot")
    allp = np.vstack(pts)
    if xlim is None:
        lo, hi = allp[:, 0].min(), allp[:, 0].max()
        pad = 0.05 * (hi - lo or 1.0)
        xlim = (lo - pad, hi + pad)
    if ylim is None:
        lo, hi = allp[:, 1].min(), allp[:, 1].max()
        pad = 0.05 * (hi - lo or 1.0)
        ylim = (lo - pad, hi + pad)
    ml, mr, mt, mb = 62, 18, 34, 48
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (x - xlim[0]) / (xlim[1] - xlim[0]) * pw

    def sy(y):
        return mt + ph - (y - ylim[0]) / (ylim[1] - ylim[0]) * ph

    out = []
    out.append(f"<svg xmlns=\"http://www.w3.org/2000/svg\" "
               f"width=\"{width}\" height=\"{height}\" "
               f"viewBox=\"0 0 {width} {height}\">")
    out.append(f"<rect x=\"0\" y=\"0\" width=\"{width}\" "
               f"height=\"{height}\" fill=\"white\"/>")
    out.append(f"<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" "
               f"height=\"{ph}\" fill=\"none\" stroke=\"#222\" "
               f"stroke-width=\"1\"/>")
    for tx in _ticks(*xlim):
        px = sx(tx)
        out.append(f"<line x1=\"{px:.2f}\" y1=\"{mt + ph}\" "
                   f"x2=\"{px:.2f}\" y2=\"{mt + ph + 5}\" "
                   f"stroke=\"#222\"/>")
        out.append(f"<text x=\"{px:.2f}\" y=\"{mt + ph + 18}\" {_FONT} "
                   f"text-anchor=\"middle\">{tx:.3g}</text>")
    for ty in _ticks(*ylim):
        py = sy(ty)
        out.append(f"<line x1=\"{ml - 5}\" y1=\"{py:.2f}\" x2=\"{ml}\" "
                   f"y2=\"{py:.2f}\" stroke=\"#222\"/>")
        out.append(f"<text x=\"{ml - 8}\" y=\"{py + 4:.2f}\" {_FONT} "
                   f"text-anchor=\"end\">{ty:.3g}</text>")
    if title:
        out.append(f"<text x=\"{width / 2:.1f}\" y=\"20\" "
                   f"font-family=\"Helvetica,Arial,sans-serif\" "
                   f"font-size=\"14\" text-anchor=\"middle\">{title}"
                   f"</text>")
    if xlabel:
        out.append(f"<text x=\"{ml + pw / 2:.1f}\" y=\"{height - 12}\" "
                   f"{_FONT} text-anchor=\"middle\">{xlabel}</text>")
    if ylabel:
        out.append(f"<text x=\"16\" y=\"{mt + ph / 2:.1f}\" {_FONT} "
                   f"text-anchor=\"middle\" transform=\"rotate(-90 16 "
                   f"{mt + ph / 2:.1f})\">{ylabel}</text>")
    for ly in layers:
        for seg in ly.segments:
            seg = np.asarray(seg, float).reshape(-1, 2)
            if len(seg) == 0:
                continue
            keep = np.isfinite(seg).all(axis=1)
            seg = seg[keep]
            if len(seg) == 0:
                continue
            if ly.kind == "points" or len(seg) == 1:
                for x, y in seg:
                    out.append(f"<circle cx=\"{sx(x):.2f}\" "
                               f"cy=\"{sy(y):.2f}\" r=\"{ly.radius}\" "
                               f"fill=\"{ly.color}\"/>")
            else:
                coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}"
                                  for x, y in seg)
                out.append(f"<polyline points=\"{coords}\" fill=\"none\" "
                           f"stroke=\"{ly.color}\" "
                           f"stroke-width=\"{ly.width}\"/>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path: str, svg: str) -> None:
    with open(path, "w") as fh:
        fh.write(svg)


def svg_stack(parts: list[str], width: int = 640) -> str:
    """Stack complete SVG documents vertically into one document."""
    import re
    if not parts:
        raise ValueError("nothing to plot")
    heights = []
    for p in parts:
        m = re.search(r'height="(\d+)"', p)
        if m is None:
            raise ValueError("part lacks a pixel height")
        heights.append(int(m.group(1)))
    out = [f"<svg xmlns=\"http://www.w3.org/2000/svg\" "
           f"width=\"{width}\" height=\"{sum(heights)}\">"]
    off = 0
    for p, h in zip(parts, heights):
        out.append(p.strip().replace("<svg ", f"<svg y=\"{off}\" ", 1))
        off += h
    out.append("</svg>")
    return "\n".join(out) + "\n"


def map_layers(km, n: int = 600, color: str = "#b22222") -> list[Layer]:
    """Graph of a piecewise map, split at its branch borders."""
    borders = sorted({float(b) for b in getattr(km, "borders", [])}
                     | {br.lo for br in getattr(km, "branches", [])}
                     | {0.0, 1.0})
    if borders[-1] < 1.0:
        borders.append(1.0)
    phase = km.phase if hasattr(km, "phase") else None
    segs = []
    for a, b in zip(borders[:-1], borders[1:]):
        if b - a < 1e-9:
            continue
        ths = np.linspace(a + 1e-9, b - 1e-9,
                          max(2, int(n * (b - a)) + 2))
        if phase is not None:
            vals = np.array([phase(t) for t in ths])
        else:
            from .kickmap import map_phase
            vals = map_phase(km, ths)
        cur = [[ths[0], vals[0]]]
        for t, v in zip(ths[1:], vals[1:]):
            if abs(v - cur[-1][1]) > 0.5:
                segs.append(np.array(cur))
                cur = [[t, v]]
            else:
                cur.append([t, v])
        segs.append(np.array(cur))
    return [Layer(kind="line", segments=segs, color=color)]


def ensure_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)
