"""Report files for one experiment run.

Writes four artifacts into the output directory:

* metrics.json   — overlaps, transition counts and flow counters
* metrics.csv    — the same, flattened (one row per flow / flow pair)
* messages.jsonl — the full message log, one JSON object per line
* timeline.svg   — concentration traces with shaded alarm bands per flow

All output is deterministic: a repeated run with the same seed produces
byte-identical files.
"""

from __future__ import annotations

import base64
import csv
import io
import json
from pathlib import Path

from ..healing import AlarmLevel
from .experiment import ORIGIN_CLIENT, LogEntry, MessageLog
from .metrics import AlarmSignal, MetricsReport

_BAND_COLORS = {
    AlarmLevel.OFF: "#d9e8d9",
    AlarmLevel.WARN: "#f2b84b",
    AlarmLevel.DANGER: "#d94f3d",
}
_LINE_COLORS = ("#3466a5", "#3aa06d", "#a0533a", "#7a5aa0", "#a09a3a")


def log_entry_to_json(entry: LogEntry) -> dict:
    doc: dict = {"instant": entry.instant, "topic": entry.topic, "origin": entry.origin}
    try:
        doc["payload"] = entry.payload.decode("utf-8")
    except UnicodeDecodeError:
        doc["payload_b64"] = base64.b64encode(entry.payload).decode("ascii")
    return doc


def emit_report(
    report: MetricsReport,
    log: MessageLog,
    out_dir: str | Path,
    signals: dict[str, AlarmSignal] | None = None,
) -> list[Path]:
    """Write the report files; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    metrics_json = out / "metrics.json"
    metrics_json.write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    written.append(metrics_json)

    metrics_csv = out / "metrics.csv"
    metrics_csv.write_text(_metrics_csv_text(report))
    written.append(metrics_csv)

    messages = out / "messages.jsonl"
    with messages.open("w", encoding="utf-8") as fh:
        for entry in log:
            fh.write(json.dumps(log_entry_to_json(entry), sort_keys=True) + "\n")
    written.append(messages)

    timeline = out / "timeline.svg"
    timeline.write_text(render_timeline_svg(report, log, signals or {}))
    written.append(timeline)
    return written


def _metrics_csv_text(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["record", "name", "off", "warn", "danger", "total", "overlap_pct"])
    for name, counts in report.transition_counts.items():
        writer.writerow(
            ["transitions", name, counts.off, counts.warn, counts.danger, counts.total, ""]
        )
    for pair, pct in report.overlaps.items():
        writer.writerow(["overlap", pair, "", "", "", "", f"{pct:.4f}"])
    return buf.getvalue()


def render_timeline_svg(
    report: MetricsReport,
    log: MessageLog,
    signals: dict[str, AlarmSignal],
    *,
    width: int = 960,
    height: int = 420,
) -> str:
    """Self-contained SVG: sensor concentration lines, threshold rules and
    one shaded alarm band per flow near the horizontal axis."""
    horizon = max(report.horizon_ms, 1)
    margin_left, margin_right, margin_top = 55, 15, 15
    band_h = 12
    bands = sorted(signals)
    plot_bottom = height - 30 - band_h * len(bands)
    plot_h = plot_bottom - margin_top
    plot_w = width - margin_left - margin_right

    series: dict[str, list[tuple[int, float]]] = {}
    for entry in log:
        if entry.origin != ORIGIN_CLIENT:
            continue
        try:
            value = float(entry.payload.decode("utf-8"))
        except (UnicodeDecodeError, ValueError):
            continue
        series.setdefault(entry.topic, []).append((entry.instant, value))
    max_value = max(
        (v for points in series.values() for _, v in points), default=1.0
    )
    max_value = max(max_value, 250.0) * 1.05

    def sx(t: float) -> float:
        return margin_left + plot_w * t / horizon

    def sy(v: float) -> float:
        return plot_bottom - plot_h * v / max_value

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{margin_left}" y="11" font-size="12">'
        f"{report.experiment} (seed {report.seed}) — concentration and alarm levels</text>",
    ]
    # Axes and threshold rules at the default warn/danger levels.
    parts.append(
        f'<line x1="{margin_left}" y1="{plot_bottom}" x2="{width - margin_right}" '
        f'y2="{plot_bottom}" stroke="#444"/>'
    )
    parts.append(
        f'<line x1="{margin_left}" y1="{margin_top}" x2="{margin_left}" '
        f'y2="{plot_bottom}" stroke="#444"/>'
    )
    for level_value, label in ((53.0, "warn 53"), (212.0, "danger 212")):
        y = sy(level_value)
        parts.append(
            f'<line x1="{margin_left}" y1="{y:.1f}" x2="{width - margin_right}" y2="{y:.1f}" '
            f'stroke="#999" stroke-dasharray="4 3"/>'
        )
        parts.append(f'<text x="{width - margin_right - 60}" y="{y - 3:.1f}" fill="#666">{label}</text>')
    for seconds in range(0, int(horizon / 1000) + 1, 100):
        x = sx(seconds * 1000)
        parts.append(
            f'<line x1="{x:.1f}" y1="{plot_bottom}" x2="{x:.1f}" y2="{plot_bottom + 4}" stroke="#444"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{plot_bottom + 14}" text-anchor="middle">{seconds}s</text>'
        )
    for tick in (0, 250, 500, 750, 1000):
        if tick > max_value:
            continue
        y = sy(tick)
        parts.append(f'<text x="{margin_left - 6}" y="{y + 3:.1f}" text-anchor="end">{tick}</text>')

    for i, topic in enumerate(sorted(series)):
        color = _LINE_COLORS[i % len(_LINE_COLORS)]
        points = " ".join(f"{sx(t):.1f},{sy(v):.1f}" for t, v in series[topic])
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1"/>')
        parts.append(
            f'<text x="{width - margin_right - 150}" y="{margin_top + 12 + 11 * i}" '
            f'fill="{color}">{topic}</text>'
        )

    for row, name in enumerate(bands):
        y = plot_bottom + 20 + band_h * row
        parts.append(f'<text x="{margin_left - 6}" y="{y + 9}" text-anchor="end">{name}</text>')
        for start, end, level in signals[name].segments():
            parts.append(
                f'<rect x="{sx(start):.1f}" y="{y}" width="{max(sx(end) - sx(start), 0.1):.1f}" '
                f'height="{band_h - 2}" fill="{_BAND_COLORS[level]}"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
