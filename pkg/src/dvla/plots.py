"""Deterministic SVG figure emission.

Three figure kinds: throughput bars, rollout/actor breakdown stacked bars,
and a throughput-vs-env-count scaling line. Rendering is a pure function of
the parsed input values: floats are formatted with %.6g, iteration orders
are explicit, and nothing timestamps the output, so re-rendering the same
input yields a byte-identical file.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .core import ConfigError
from . import metrics

WIDTH = 720
HEIGHT = 440
MARGIN_L = 74
MARGIN_R = 24
MARGIN_T = 46
MARGIN_B = 64

PALETTE = ("#4878a8", "#e49444", "#6a9f58", "#d1605e", "#85b6b2", "#b8b0ac")
SEGMENTS = ("rollout", "actor", "transfer", "broadcast")

KINDS = ("throughput", "breakdown", "scaling")


def _fmt(x) -> str:
    s = "%.6g" % float(x)
    return "0" if s == "-0" else s


def _esc(s: str) -> str:
    return (str(s).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def _nice_ceiling(v: float) -> float:
    """Smallest 1/2/5 x 10^k value >= v (axis upper bound)."""
    if v <= 0:
        return 1.0
    import math
    exp = math.floor(math.log10(v))
    for mult in (1.0, 2.0, 5.0, 10.0):
        cand = mult * 10.0 ** exp
        if cand >= v * (1.0 - 1e-9):
            return cand
    return 10.0 ** (exp + 1)


class _Canvas:
    def __init__(self, title: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
            f'<text x="{WIDTH // 2}" y="24" font-family="monospace" '
            f'font-size="15" text-anchor="middle">{_esc(title)}</text>',
        ]

    def rect(self, x, y, w, h, fill):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
            f'height="{_fmt(h)}" fill="{fill}"/>')

    def line(self, x1, y1, x2, y2, color="#333333", width=1):
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" '
            f'y2="{_fmt(y2)}" stroke="{color}" stroke-width="{width}"/>')

    def text(self, x, y, s, size=12, anchor="middle", color="#111111"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-family="monospace" '
            f'font-size="{size}" text-anchor="{anchor}" '
            f'fill="{color}">{_esc(s)}</text>')

    def polyline(self, pts, color, width=2):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"/>')

    def circle(self, x, y, r, fill):
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" fill="{fill}"/>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _y_axis(cv: _Canvas, vmax: float, label: str):
    """Draw the y axis with 5 ticks; returns a value->pixel mapper."""
    top, bottom = MARGIN_T, HEIGHT - MARGIN_B
    vmax = _nice_ceiling(vmax)
    span = bottom - top

    def ymap(v: float) -> float:
        return bottom - (v / vmax) * span

    cv.line(MARGIN_L, top, MARGIN_L, bottom)
    for i in range(6):
        v = vmax * i / 5.0
        y = ymap(v)
        cv.line(MARGIN_L - 4, y, MARGIN_L, y)
        cv.text(MARGIN_L - 8, y + 4, _fmt(v), size=11, anchor="end")
    cv.text(16, (top + bottom) / 2, label, size=12, anchor="middle")
    cv.line(MARGIN_L, bottom, WIDTH - MARGIN_R, bottom)
    return ymap


def plot_throughput(pairs: list) -> str:
    """Bar chart; pairs is [(label, transitions_per_sec), ...]."""
    if not pairs:
        raise ConfigError("throughput plot needs at least one labeled value")
    cv = _Canvas("throughput (transitions/s)")
    ymap = _y_axis(cv, max(v for _, v in pairs), "steps/s")
    bottom = HEIGHT - MARGIN_B
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    slot = plot_w / len(pairs)
    bar_w = min(90.0, slot * 0.6)
    for i, (label, value) in enumerate(pairs):
        cx = MARGIN_L + slot * (i + 0.5)
        y = ymap(value)
        cv.rect(cx - bar_w / 2, y, bar_w, bottom - y, PALETTE[i % len(PALETTE)])
        cv.text(cx, y - 6, _fmt(value), size=11)
        cv.text(cx, bottom + 18, label, size=12)
    return cv.render()


def plot_breakdown(rows: list) -> str:
    """Stacked bars; rows is [(label, {segment: seconds}), ...]."""
    if not rows:
        raise ConfigError("breakdown plot needs at least one run")
    cv = _Canvas("per-epoch time breakdown (s)")
    totals = [sum(seg.get(k, 0.0) for k in SEGMENTS) for _, seg in rows]
    ymap = _y_axis(cv, max(totals), "seconds")
    bottom = HEIGHT - MARGIN_B
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    slot = plot_w / len(rows)
    bar_w = min(90.0, slot * 0.6)
    for i, (label, seg) in enumerate(rows):
        cx = MARGIN_L + slot * (i + 0.5)
        acc = 0.0
        for j, name in enumerate(SEGMENTS):
            v = float(seg.get(name, 0.0))
            if v <= 0:
                continue
            y0 = ymap(acc)
            y1 = ymap(acc + v)
            cv.rect(cx - bar_w / 2, y1, bar_w, y0 - y1, PALETTE[j])
            acc += v
        cv.text(cx, bottom + 18, label, size=12)
    for j, name in enumerate(SEGMENTS):
        lx = WIDTH - MARGIN_R - 110
        ly = MARGIN_T + 16 * j
        cv.rect(lx, ly - 9, 12, 12, PALETTE[j])
        cv.text(lx + 18, ly + 1, name, size=11, anchor="start")
    return cv.render()


def plot_scaling(series: dict) -> str:
    """Line chart; series maps label -> [(n_envs, throughput), ...]."""
    if not series or all(not pts for pts in series.values()):
        raise ConfigError("scaling plot needs at least one curve point")
    cv = _Canvas("throughput vs environment count")
    vmax = max(v for pts in series.values() for _, v in pts)
    xs = sorted({x for pts in series.values() for x, _ in pts})
    x_lo, x_hi = xs[0], xs[-1]
    x_span = max(x_hi - x_lo, 1)
    ymap = _y_axis(cv, vmax, "steps/s")
    bottom = HEIGHT - MARGIN_B
    plot_w = WIDTH - MARGIN_L - MARGIN_R

    def xmap(x: float) -> float:
        return MARGIN_L + (x - x_lo) / x_span * plot_w

    n_ticks = min(len(xs), 8)
    for i in range(n_ticks):
        x = xs[round(i * (len(xs) - 1) / max(n_ticks - 1, 1))]
        px = xmap(x)
        cv.line(px, bottom, px, bottom + 4)
        cv.text(px, bottom + 18, _fmt(x), size=11)
    cv.text((MARGIN_L + WIDTH - MARGIN_R) / 2, HEIGHT - 16, "n_envs", size=12)
    for i, label in enumerate(sorted(series)):
        pts = sorted(series[label])
        color = PALETTE[i % len(PALETTE)]
        cv.polyline([(xmap(x), ymap(v)) for x, v in pts], color)
        for x, v in pts:
            cv.circle(xmap(x), ymap(v), 2.5, color)
        lx = MARGIN_L + 12
        ly = MARGIN_T + 16 * i
        cv.rect(lx, ly - 9, 12, 12, color)
        cv.text(lx + 18, ly + 1, label, size=11, anchor="start")
    return cv.render()


# --------------------------------------------------------------- file glue

def _breakdown_of(summary: dict) -> dict:
    return {k: float(summary.get(f"{k}_time", 0.0)) for k in SEGMENTS}


def render_from_file(in_path: str, kind: str) -> str:
    """Build the requested figure from a report.json, metrics.jsonl, or
    sweep CSV file (detected by suffix)."""
    if kind not in KINDS:
        raise ConfigError(f"unknown plot kind {kind!r}; choose from {KINDS}")
    path = Path(in_path)
    if not path.exists():
        raise ConfigError(f"plot input not found: {in_path}")
    suffix = path.suffix.lower()

    if suffix == ".csv":
        if kind != "scaling":
            raise ConfigError(f"CSV input provides a sweep curve; use "
                              f"--kind scaling, not {kind!r}")
        series: dict = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                label = row.get("mode", "sim")
                series.setdefault(label, []).append(
                    (float(row["n_envs"]), float(row["throughput"])))
        return plot_scaling(series)

    if suffix == ".json":
        report = json.loads(path.read_text())
        runs = report.get("runs")
        if not isinstance(runs, dict):
            raise ConfigError("report file lacks a 'runs' object")
        labels = sorted(runs)
        if kind == "throughput":
            return plot_throughput(
                [(lb, float(runs[lb]["throughput"])) for lb in labels])
        if kind == "breakdown":
            return plot_breakdown([(lb, _breakdown_of(runs[lb])) for lb in labels])
        raise ConfigError("scaling plots need a sweep CSV input")

    if suffix == ".jsonl":
        records = metrics.read_records(str(path))
        epochs = [r for r in records if r.get("kind") == "epoch"]
        if not epochs:
            raise ConfigError(f"no epoch records in {in_path}")
        summaries = [r for r in records if r.get("kind") == "run_summary"]
        label = summaries[-1]["mode"] if summaries else "run"
        if kind == "throughput":
            summ = metrics.summarize(records)
            return plot_throughput([(label, summ.transitions_per_sec)])
        if kind == "breakdown":
            mean = {k: sum(float(e.get(f"{k}_time", 0.0)) for e in epochs)
                    / len(epochs) for k in SEGMENTS}
            return plot_breakdown([(label, mean)])
        raise ConfigError("scaling plots need a sweep CSV input")

    raise ConfigError(f"unsupported plot input {in_path!r} "
                      "(expected .json, .jsonl, or .csv)")


def write_plot(in_path: str, out_path: str, kind: str) -> str:
    svg = render_from_file(in_path, kind)
    Path(out_path).write_text(svg)
    return out_path
