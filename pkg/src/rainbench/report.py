"""CSV and SVG emitters for sweep reports. Output is byte-stable."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from xml.sax.saxutils import escape

from .pipeline import SweepReport, level_tag

CSV_HEADER = ("level_mm_h", "class", "ap", "f1", "degradation_pct")
PALETTE = ("#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _num(v):
    return "" if v is None else f"{v:.6f}"


def csv_text(report: SweepReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for (level, cls), (ap, f1, deg) in sorted(report.table().items()):
        w.writerow((level_tag(level), cls, _num(ap), _num(f1), _num(deg)))
    return buf.getvalue()


def emit_csv(report: SweepReport, path) -> None:
    Path(path).write_text(csv_text(report))


def svg_text(report: SweepReport, metric: str = "ap") -> str:
    metric = metric.lower()
    if metric not in ("ap", "f1"):
        raise ValueError("metric must be 'ap' or 'f1'")
    width, height = 640, 400
    left, right, top, bottom = 60, 130, 40, 50
    pw, ph = width - left - right, height - top - bottom
    levels = list(report.levels)
    lo, hi = min(levels), max(levels)
    span = (hi - lo) or 1.0

    def sx(level):
        return left + (level - lo) / span * pw

    def sy(value):
        return top + (1.0 - value) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{left + pw / 2:.2f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">{metric.upper()} vs rainfall rate</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="#000000"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="#000000"/>',
    ]
    for i in range(6):
        v = i / 5
        y = sy(v)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" '
                   f'stroke="#dddddd"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">{v:.1f}</text>')
    for lv in levels:
        x = sx(lv)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="#000000"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{level_tag(lv)}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 10}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">rainfall (mm/h)</text>')

    for idx, cls in enumerate(report.classes):
        color = PALETTE[idx % len(PALETTE)]
        # break the line wherever a value is absent so gaps stay visible
        runs, run = [], []
        for lv in levels:
            v = report.metric(lv, cls, metric)
            if v is None:
                if run:
                    runs.append(run)
                run = []
            else:
                run.append((sx(lv), sy(v)))
        if run:
            runs.append(run)
        out.append(f'<g id="class-{cls}" stroke="{color}" fill="{color}">')
        for r in runs:
            if len(r) > 1:
                pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in r)
                out.append(f'<polyline points="{pts}" fill="none" stroke-width="2"/>')
            for x, y in r:
                out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3"/>')
        out.append("</g>")
        ly = top + 14 + idx * 18
        lx = left + pw + 16
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}" font-family="sans-serif" font-size="11">'
                   f'{escape(f"class {cls}")}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(report: SweepReport, metric: str, path) -> None:
    Path(path).write_text(svg_text(report, metric))


def metadata_text(report: SweepReport) -> str:
    lines = [f"{k} = {v}" for k, v in sorted(report.metadata.items())]
    for level, reason in sorted(report.failures.items()):
        lines.append(f"failed_level_{level_tag(level)} = {reason}")
    return "\n".join(lines) + "\n"


def write_reports(report: SweepReport, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_csv(report, out_dir / "report.csv")
    emit_svg(report, "ap", out_dir / "ap.svg")
    emit_svg(report, "f1", out_dir / "f1.svg")
    (out_dir / "metadata.txt").write_text(metadata_text(report))
    return out_dir
