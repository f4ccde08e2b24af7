"""Report emission: atomic file writes plus the CSV tables and SVG charts of a run.

SVG layout is computed here; the Jinja2 templates under app/templates only place the
primitives. Numbers are pre-formatted so identical inputs render identical bytes.
"""
from __future__ import annotations

import json
import os
import tempfile
from collections.abc import Sequence
from dataclasses import dataclass
from datetime import datetime, timezone

UTC = timezone.utc
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader, StrictUndefined, select_autoescape

TEMPLATE_DIR = Path(__file__).resolve().parents[1] / "templates"

_env = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR)),
    autoescape=select_autoescape(enabled_extensions=("j2",), default_for_string=True),
    undefined=StrictUndefined,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)

DECISION_COLORS = {
    "Confirmed": "#2e7d32",
    "Tentative": "#f9a825",
    "Rejected": "#c62828",
    "shadow": "#1565c0",
}
# 3P% colour ramp endpoints
PCT_LOW = (0.25, (198, 40, 40))
PCT_HIGH = (0.45, (46, 125, 50))


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def atomic_write_json(path: str | Path, payload: Any) -> Path:
    return atomic_write_text(path, json.dumps(payload, ensure_ascii=False, indent=2) + "\n")


def write_csv(df: pd.DataFrame, path: str | Path, float_format: str = "%.6f") -> Path:
    return atomic_write_text(path, df.to_csv(index=False, float_format=float_format, lineterminator="\n"))


def _f(v: float) -> str:
    return f"{v:.2f}"


def _stamp(deterministic: bool) -> str:
    if deterministic:
        return ""
    return datetime.now(UTC).replace(microsecond=0).isoformat().replace("+00:00", "Z")


def pct_color(pct: float) -> str:
    (lo, c0), (hi, c1) = PCT_LOW, PCT_HIGH
    t = 0.0 if not np.isfinite(pct) else min(max((pct - lo) / (hi - lo), 0.0), 1.0)
    r, g, b = (round(a + (b_ - a) * t) for a, b_ in zip(c0, c1))
    return f"#{r:02x}{g:02x}{b:02x}"


@dataclass(frozen=True)
class _Scale:
    lo: float
    hi: float
    px0: float
    px1: float

    def __call__(self, v: float) -> float:
        if self.hi == self.lo:
            return (self.px0 + self.px1) / 2.0
        return self.px0 + (v - self.lo) / (self.hi - self.lo) * (self.px1 - self.px0)

    def ticks(self, n: int = 5) -> list[dict[str, str]]:
        return [
            {"x": _f(self(v)), "label": f"{v:.2f}"}
            for v in np.linspace(self.lo, self.hi, n)
        ]


def _padded(lo: float, hi: float) -> tuple[float, float]:
    if hi == lo:
        return lo - 1.0, hi + 1.0
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def box_plot_svg(
    groups: Sequence[tuple[str, Sequence[float], str]],
    title: str,
    deterministic: bool = False,
) -> str:
    """Horizontal box plots, one row per (label, samples, colour); NaN samples are ignored."""
    cleaned = [(label, np.asarray(s, dtype=float), color) for label, s, color in groups]
    cleaned = [(label, s[np.isfinite(s)], color) for label, s, color in cleaned]
    values = np.concatenate([s for _, s, _ in cleaned if s.size] or [np.zeros(1)])
    width, left, right, top, row_h = 760, 180, 30, 40, 22
    height = top + row_h * len(cleaned) + 40
    scale = _Scale(*_padded(float(values.min()), float(values.max())), left, width - right)

    boxes = []
    for i, (label, s, color) in enumerate(cleaned):
        cy = top + row_h * i + row_h / 2.0
        box: dict[str, Any] = {"label": label, "cy": _f(cy), "color": color, "empty": s.size == 0}
        if s.size:
            q1, med, q3 = np.percentile(s, [25, 50, 75])
            iqr = q3 - q1
            inside = s[(s >= q1 - 1.5 * iqr) & (s <= q3 + 1.5 * iqr)]
            box.update(
                q1=_f(scale(q1)),
                q3=_f(scale(q3)),
                box_w=_f(scale(q3) - scale(q1)),
                median=_f(scale(med)),
                lo=_f(scale(inside.min())),
                hi=_f(scale(inside.max())),
                outliers=[_f(scale(v)) for v in s[(s < q1 - 1.5 * iqr) | (s > q3 + 1.5 * iqr)]],
                y0=_f(cy - 7),
                y1=_f(cy + 7),
            )
        boxes.append(box)
    return _env.get_template("box_plot.svg.j2").render(
        title=title,
        width=width,
        height=height,
        label_x=left - 8,
        axis_y=_f(height - 30),
        axis_x0=left,
        axis_x1=width - right,
        ticks=scale.ticks(),
        zero_x=_f(scale(0.0)) if scale.lo <= 0.0 <= scale.hi else None,
        plot_top=top,
        boxes=boxes,
        generated_at=_stamp(deterministic),
    )


def histogram_svg(
    values: Sequence[float],
    title: str,
    xlabel: str,
    bins: int = 20,
    deterministic: bool = False,
) -> str:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        v = np.zeros(1)
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    width, height, left, right, top, bottom = 640, 360, 50, 20, 40, 50
    xs = _Scale(lo, hi, left, width - right)
    ymax = max(int(counts.max()), 1)
    plot_h = height - top - bottom
    bars = []
    for c, a, b in zip(counts, edges, edges[1:]):
        h = plot_h * c / ymax
        bars.append({"x": _f(xs(a)), "w": _f(xs(b) - xs(a)), "y": _f(height - bottom - h), "h": _f(h), "count": int(c)})
    return _env.get_template("histogram.svg.j2").render(
        title=title,
        xlabel=xlabel,
        width=width,
        height=height,
        axis_y=height - bottom,
        axis_x0=left,
        axis_x1=width - right,
        ticks=xs.ticks(),
        ymax=ymax,
        top=top,
        bars=bars,
        n=int(v.size),
        mean=f"{float(v.mean()):.4f}",
        sd=f"{float(v.std(ddof=1)) if v.size > 1 else 0.0:.4f}",
        generated_at=_stamp(deterministic),
    )


def bar_chart_svg(
    labels: Sequence[str],
    values: Sequence[float],
    pcts: Sequence[float],
    title: str,
    deterministic: bool = False,
) -> str:
    """Horizontal bars from zero, coloured by three-point percentage."""
    vals = np.asarray(values, dtype=float)
    width, left, right, top, row_h = 720, 200, 70, 40, 24
    height = top + row_h * max(len(labels), 1) + 40
    lo = min(0.0, float(vals.min())) if vals.size else 0.0
    hi = max(0.0, float(vals.max())) if vals.size else 0.0
    if lo == hi:
        lo, hi = -1.0, 1.0
    scale = _Scale(lo, hi, left, width - right)
    zero = scale(0.0)
    bars = []
    for i, (label, v, pct) in enumerate(zip(labels, vals, pcts)):
        cy = top + row_h * i + row_h / 2.0
        x = scale(v)
        bars.append(
            {
                "label": label,
                "cy": _f(cy),
                "y": _f(cy - 8),
                "x": _f(min(x, zero)),
                "w": _f(abs(x - zero)),
                "color": pct_color(float(pct)),
                "value": f"{v:.3f}",
                "pct": f"{float(pct):.3f}",
                "vx": _f(max(x, zero) + 4),
            }
        )
    return _env.get_template("bar_chart.svg.j2").render(
        title=title,
        width=width,
        height=height,
        label_x=left - 8,
        zero_x=_f(zero),
        top=top,
        bottom_y=_f(height - 30),
        ticks=scale.ticks(),
        bars=bars,
        generated_at=_stamp(deterministic),
    )
