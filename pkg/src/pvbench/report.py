"""Tables in the published layouts and small self-contained SVG charts."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .data import format_float, format_ts, from_epoch
from .eval import BacktestReport, csi_bucket_labels

TABLE_KEYS = ("month", "plant", "csi", "weekly")
MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")

# Average nMAE (%) published for the 32-plant fleet. Real-data values that
# synthetic runs are not expected to reproduce; kept for orientation only.
PUBLISHED_AVG_NMAE = {"gb": 3.26, "ens": 3.07}


@dataclass
class Table:
    key: str
    header: list[str]
    rows: list[list]
    document: dict
    svg: str

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format_float(v)
    return v


def _md(m):
    return None if m is None else m.as_dict()


def _nmae(m):
    return None if m is None else m.nmae


def month_table(rep: BacktestReport) -> Table:
    """Models as rows, calendar months as columns, then both averages."""
    by_month = rep.by_month()
    overall = rep.overall()
    pw = rep.plant_weighted()
    header = ["model"] + list(MONTHS) + ["avg_hour_weighted", "avg_plant_weighted"]
    rows = [[m] + [_nmae(by_month[mo][m]) for mo in range(1, 13)]
            + [_nmae(overall[m]), pw[m]["nmae"]] for m in rep.models]
    doc = {"table": "month", "metric": "nmae_percent",
           "cells": {m: {MONTHS[mo - 1]: _md(by_month[mo][m]) for mo in range(1, 13)}
                     for m in rep.models},
           "avg_hour_weighted": {m: _md(overall[m]) for m in rep.models},
           "avg_plant_weighted": pw,
           "published_reference_avg_nmae": {
               "values": PUBLISHED_AVG_NMAE,
               "note": "real 32-plant fleet; not reproducible on synthetic data"}}
    series = {m: [_nmae(by_month[mo][m]) for mo in range(1, 13)] for m in rep.models}
    svg = line_chart(list(MONTHS), series, "Monthly nMAE", "month", "nMAE (%)")
    return Table("month", header, rows, doc, svg)


def plant_table(rep: BacktestReport) -> Table:
    by_plant = rep.by_plant()
    header = ["plant_id"] + list(rep.models)
    rows = [[p] + [_nmae(by_plant[p][m]) for m in rep.models] for p in rep.plants]
    doc = {"table": "plant", "metric": "nmae_percent",
           "cells": {p: {m: _md(v) for m, v in row.items()} for p, row in by_plant.items()}}
    series = {m: [_nmae(by_plant[p][m]) for p in rep.plants] for m in rep.models}
    svg = bar_chart(list(rep.plants), series, "nMAE by plant", "plant", "nMAE (%)")
    return Table("plant", header, rows, doc, svg)


def csi_table(rep: BacktestReport) -> Table:
    """Buckets as rows with the daytime hour count, one nMAE column per model."""
    labels = csi_bucket_labels()
    cells = {(b.label, b.model): b for b in rep.by_csi()}
    header = ["csi_bucket", "n_hours"] + list(rep.models)
    rows = []
    for lab in labels:
        counts = [cells[(lab, m)].n_hours for m in rep.models if (lab, m) in cells]
        rows.append([lab, max(counts) if counts else 0]
                    + [_nmae(cells[(lab, m)].metrics) if (lab, m) in cells else None
                       for m in rep.models])
    doc = {"table": "csi", "metric": "nmae_percent", "edges": labels,
           "cells": {lab: {m: {"n_hours": cells[(lab, m)].n_hours,
                               "metrics": _md(cells[(lab, m)].metrics)}
                           for m in rep.models if (lab, m) in cells} for lab in labels}}
    series = {m: [r[2 + k] for r in rows] for k, m in enumerate(rep.models)}
    svg = bar_chart(labels, series, "nMAE by clear-sky index", "CSI bucket", "nMAE (%)")
    return Table("csi", header, rows, doc, svg)


def weekly_table(rep: BacktestReport) -> Table:
    weekly = rep.weekly()
    header = ["fold", "test_start"] + list(rep.models)
    rows = [[f.index, format_ts(from_epoch(f.test_start))] + [weekly[m][k] for m in rep.models]
            for k, f in enumerate(rep.folds)]
    doc = {"table": "weekly", "metric": "nmae_percent",
           "folds": [r[1] for r in rows], "series": weekly}
    svg = line_chart([str(f.index) for f in rep.folds], weekly, "nMAE per test window",
                     "fold", "nMAE (%)")
    return Table("weekly", header, rows, doc, svg)


BUILDERS = {"month": month_table, "plant": plant_table, "csi": csi_table, "weekly": weekly_table}


def build_table(rep: BacktestReport, key: str) -> Table:
    if key not in BUILDERS:
        raise ValueError(f"unknown table {key!r}; choose from {', '.join(TABLE_KEYS)}")
    return BUILDERS[key](rep)


# ------------------------------------------------------------ svg

WIDTH, HEIGHT = 720, 360
LEFT, RIGHT, TOP, BOTTOM = 60, 110, 30, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _frame(title: str, xlabel: str, ylabel: str, ymax: float, xticks: list[tuple[float, str]],
           series_names: list[str]) -> list[str]:
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
           f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
           f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 8}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="14" y="{TOP + ph / 2}" text-anchor="middle" '
           f'transform="rotate(-90 14 {TOP + ph / 2})">{escape(ylabel)}</text>']
    for k in range(5):
        v = ymax * k / 4
        y = TOP + ph - ph * k / 4
        out.append(f'<line x1="{LEFT - 4}" y1="{_fmt(y)}" x2="{LEFT}" y2="{_fmt(y)}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_fmt(y + 4)}" text-anchor="end">{_fmt(v)}</text>')
    for x, lab in xticks:
        out.append(f'<text x="{_fmt(x)}" y="{TOP + ph + 16}" text-anchor="middle">{escape(lab)}</text>')
    for i, name in enumerate(series_names):
        y = TOP + 10 + 16 * i
        c = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{WIDTH - RIGHT + 12}" y="{y - 8}" width="10" height="10" fill="{c}"/>')
        out.append(f'<text x="{WIDTH - RIGHT + 26}" y="{y + 1}">{escape(name)}</text>')
    return out


def _ymax(series: dict) -> float:
    vals = [v for s in series.values() for v in s if v is not None and np.isfinite(v)]
    top = max(vals) if vals else 0.0
    return 1.0 if top <= 0 else float(top) * 1.1


def _tick_every(n: int) -> int:
    return max(1, int(np.ceil(n / 12)))


def line_chart(xlabels: list[str], series: dict, title: str, xlabel: str, ylabel: str) -> str:
    """One polyline per series; gaps (None) split the line."""
    n = len(xlabels)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    ymax = _ymax(series)

    def xpos(i):
        return LEFT + (pw * (i + 0.5) / n if n else 0)

    def ypos(v):
        return TOP + ph - ph * v / ymax

    every = _tick_every(n)
    out = _frame(title, xlabel, ylabel, ymax,
                 [(xpos(i), xlabels[i]) for i in range(0, n, every)], list(series))
    for k, (name, vals) in enumerate(series.items()):
        c = PALETTE[k % len(PALETTE)]
        run = []
        for i, v in enumerate(list(vals) + [None]):
            if v is not None and np.isfinite(v):
                run.append(f"{_fmt(xpos(i))},{_fmt(ypos(v))}")
                continue
            if len(run) > 1:
                out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" '
                           f'points="{" ".join(run)}"/>')
            elif run:
                x, y = run[0].split(",")
                out.append(f'<circle cx="{x}" cy="{y}" r="2" fill="{c}"/>')
            run = []
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_chart(xlabels: list[str], series: dict, title: str, xlabel: str, ylabel: str) -> str:
    """Grouped bars, one colour per series."""
    n, m = len(xlabels), max(len(series), 1)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    ymax = _ymax(series)
    slot = pw / n if n else pw
    bw = slot * 0.8 / m
    out = _frame(title, xlabel, ylabel, ymax,
                 [(LEFT + slot * (i + 0.5), xlabels[i]) for i in range(n)], list(series))
    for k, vals in enumerate(series.values()):
        c = PALETTE[k % len(PALETTE)]
        for i, v in enumerate(vals):
            if v is None or not np.isfinite(v):
                continue
            h = ph * v / ymax
            x = LEFT + slot * i + slot * 0.1 + bw * k
            out.append(f'<rect x="{_fmt(x)}" y="{_fmt(TOP + ph - h)}" width="{_fmt(bw)}" '
                       f'height="{_fmt(h)}" fill="{c}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
