"""Dataset ingestion and replay scheduling.

Reads the air-quality CSV format (semicolon-separated, decimal commas,
missing readings marked -200) and turns one column into a deterministic
emission schedule: N sensors replay the same series round by round at a
fixed period with small per-sensor offsets, optionally perturbed by a
seeded jitter so the sensors disagree slightly, like real hardware would.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .rng import make_stream

MISSING_MARKER = -200.0
JITTER_STREAM_TAG = 0x4A495454


class DatasetError(ValueError):
    """Dataset file missing, malformed or unusable."""


@dataclass(frozen=True)
class DatasetSeries:
    """One numeric column, missing-marker rows removed."""

    values: tuple[float, ...]
    source_column: str
    dropped_rows: int


def load_dataset(
    path: str | Path,
    column: str = "NOx(GT)",
    *,
    separator: str = ";",
    decimal_comma: bool = True,
    missing_marker: float = MISSING_MARKER,
) -> DatasetSeries:
    """Extract `column` from a CSV file.

    Rows whose cell equals `missing_marker` are skipped and counted;
    completely empty rows (common as trailing noise in the original
    export) are ignored. Any other unparseable cell is an error naming
    the offending row.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from None
    rows = list(csv.reader(text.splitlines(), delimiter=separator))
    if not rows:
        raise DatasetError(f"{path} is empty")
    header = rows[0]
    try:
        column_index = header.index(column)
    except ValueError:
        raise DatasetError(f"{path} has no column {column!r} (header: {header})") from None
    values: list[float] = []
    dropped = 0
    for row_number, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        if column_index >= len(row):
            raise DatasetError(f"{path} row {row_number}: missing column {column!r}")
        cell = row[column_index].strip()
        if decimal_comma:
            cell = cell.replace(",", ".")
        try:
            value = float(cell)
        except ValueError:
            raise DatasetError(
                f"{path} row {row_number}: cannot parse {column!r} value {cell!r}"
            ) from None
        if value == missing_marker:
            dropped += 1
            continue
        values.append(value)
    if not values:
        raise DatasetError(f"{path} contains no usable {column!r} values")
    return DatasetSeries(values=tuple(values), source_column=column, dropped_rows=dropped)


@dataclass(frozen=True)
class ReplayPlan:
    """How a series is fanned out to sensors over virtual time."""

    message_count: int = 120
    period_ms: int = 5000
    sensors: tuple[str, ...] = ("1", "2", "3")
    offsets_ms: tuple[int, ...] = (0, 100, 200)
    jitter_pct: float = 0.0
    jitter_seed: int = 0
    topic_template: str = "sensors/{sensor}/nox"

    def __post_init__(self):
        if self.message_count < 1:
            raise ValueError("message_count must be >= 1")
        if self.period_ms < 1:
            raise ValueError("period_ms must be >= 1")
        if len(self.offsets_ms) != len(self.sensors):
            raise ValueError("need one offset per sensor")
        if list(self.offsets_ms) != sorted(set(self.offsets_ms)):
            raise ValueError("offsets must be strictly increasing")
        if any(not 0 <= off < self.period_ms for off in self.offsets_ms):
            raise ValueError("offsets must lie in [0, period_ms)")
        if not 0.0 <= self.jitter_pct < 1.0:
            raise ValueError("jitter_pct must be in [0, 1)")

    def topic_for(self, sensor: str) -> str:
        return self.topic_template.format(sensor=sensor)


@dataclass(frozen=True)
class ScheduledEmission:
    instant: int
    sensor: str
    topic: str
    value: float


def schedule(series: DatasetSeries, plan: ReplayPlan) -> list[ScheduledEmission]:
    """Expand (series, plan) into the full emission list, ordered by instant.

    Pure: identical inputs give the identical list. Round k emits
    series[k] on every sensor at k*period + offset; with jitter_pct > 0
    each sensor perturbs its copy by a seeded factor in
    [1 - jitter_pct, 1 + jitter_pct], rounded to 3 decimals.
    """
    if plan.message_count > len(series.values):
        raise ValueError(
            f"plan wants {plan.message_count} messages but series has {len(series.values)}"
        )
    jitter_streams = [
        make_stream(plan.jitter_seed, JITTER_STREAM_TAG, i) for i in range(len(plan.sensors))
    ]
    out: list[ScheduledEmission] = []
    for k in range(plan.message_count):
        base = series.values[k]
        for i, sensor in enumerate(plan.sensors):
            value = base
            if plan.jitter_pct > 0.0:
                factor = 1.0 + plan.jitter_pct * (2.0 * jitter_streams[i].random() - 1.0)
                value = round(base * factor, 3)
            out.append(
                ScheduledEmission(
                    instant=k * plan.period_ms + plan.offsets_ms[i],
                    sensor=sensor,
                    topic=plan.topic_for(sensor),
                    value=value,
                )
            )
    out.sort(key=lambda e: e.instant)
    return out


def sliced(series: DatasetSeries, start_row: int) -> DatasetSeries:
    """Drop the first `start_row` valid values (CLI --start-row)."""
    if start_row < 0 or start_row >= len(series.values):
        raise DatasetError(f"start row {start_row} outside series of {len(series.values)}")
    return DatasetSeries(
        values=series.values[start_row:],
        source_column=series.source_column,
        dropped_rows=series.dropped_rows,
    )
