#!/usr/bin/env python3
"""Regenerate the bundled sample dataset (src/faultwire/data/airquality_nox.csv).

The original hourly air-quality export cannot be redistributed here, so we
ship a synthetic stand-in with the same file format (semicolon separator,
decimal commas, -200 missing markers, trailing empty columns) and a
NOx(GT) series with comparable dynamics: a slow daily swing plus a faster
oscillation and AR(1) noise, so the signal keeps crossing the 53 ppb warn
and 212 ppb danger thresholds the experiments alarm on.

Deterministic: same script, same file. Run from the repo root:

    python scripts/make_dataset.py
"""

from __future__ import annotations

import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "faultwire" / "data" / "airquality_nox.csv"

SEED = 2021
ROWS = 150                 # valid rows written (>= 120 plus slack for --start-row)
BASE = 118.0               # ppb working point, between warn (53) and danger (212)
SLOW_AMPLITUDE = 88.0      # daily-style swing
SLOW_PERIOD = 41.0
FAST_AMPLITUDE = 62.0      # traffic-style oscillation that straddles thresholds
FAST_PERIOD = 9.5
NOISE_SIGMA = 13.0
NOISE_RHO = 0.55           # AR(1) persistence
CLIP_LO, CLIP_HI = 8.0, 640.0
MISSING_EVERY = 23         # every Nth row becomes a -200 marker row

HEADER = (
    "Date;Time;CO(GT);PT08.S1(CO);NMHC(GT);C6H6(GT);PT08.S2(NMHC);NOx(GT);"
    "PT08.S3(NOx);NO2(GT);PT08.S4(NO2);PT08.S5(O3);T;RH;AH;;"
)


def nox_series(n: int) -> list[float]:
    rng = random.Random(SEED)
    noise = 0.0
    out = []
    for k in range(n):
        noise = NOISE_RHO * noise + rng.gauss(0.0, NOISE_SIGMA)
        value = (
            BASE
            + SLOW_AMPLITUDE * math.sin(2 * math.pi * k / SLOW_PERIOD + 0.9)
            + FAST_AMPLITUDE * math.sin(2 * math.pi * k / FAST_PERIOD + 2.1)
            + noise
        )
        out.append(min(max(value, CLIP_LO), CLIP_HI))
    return out


def decimal_comma(x: float, digits: int = 1) -> str:
    return f"{x:.{digits}f}".replace(".", ",")


def make_rows() -> list[str]:
    rng = random.Random(SEED + 1)
    values = nox_series(ROWS)
    rows = []
    hour = 18
    day, month = 10, 3
    written = 0
    while written < ROWS:
        date = f"{day:02d}/{month:02d}/2004"
        clock = f"{hour:02d}.00.00"
        row_index = len(rows)
        if row_index and row_index % MISSING_EVERY == 0:
            nox = "-200"
        else:
            nox = str(int(round(values[written])))
            written += 1
        co = decimal_comma(rng.uniform(0.6, 4.2))
        benzene = decimal_comma(rng.uniform(2.0, 14.0))
        temp = decimal_comma(rng.uniform(8.0, 29.0))
        rh = decimal_comma(rng.uniform(25.0, 70.0))
        ah = decimal_comma(rng.uniform(0.6, 1.4), 4)
        cells = [
            date,
            clock,
            co,
            str(rng.randint(900, 1500)),
            "-200",
            benzene,
            str(rng.randint(700, 1100)),
            nox,
            str(rng.randint(600, 1200)),
            str(rng.randint(50, 160)),
            str(rng.randint(1000, 1800)),
            str(rng.randint(500, 1300)),
            temp,
            rh,
            ah,
            "",
            "",
        ]
        rows.append(";".join(cells))
        hour += 1
        if hour == 24:
            hour = 0
            day += 1
            if day > 30:
                day = 1
                month += 1
    return rows


def main() -> None:
    OUT.parent.mkdir(parents=True, exist_ok=True)
    body = "\n".join([HEADER, *make_rows()])
    # Trailing empty lines, as in the original export.
    OUT.write_text(body + "\n\n\n", encoding="utf-8")
    values = nox_series(ROWS)[:120]
    warn = sum(1 for v in values if 53 <= v < 212)
    danger = sum(1 for v in values if v >= 212)
    changes = sum(
        1
        for a, b in zip(values, values[1:])
        if (a >= 212) != (b >= 212) or (a >= 53) != (b >= 53)
    )
    print(f"wrote {OUT}")
    print(
        f"first 120 values: min={min(values):.0f} max={max(values):.0f} "
        f"off={120 - warn - danger} warn={warn} danger={danger} level_changes={changes}"
    )


if __name__ == "__main__":
    main()
