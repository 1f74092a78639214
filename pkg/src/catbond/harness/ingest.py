"""CSV ingestion for claim events and treasury yields.

Both readers insist on exact headers and report problems by row number
and column name, so a malformed export fails loudly at the door rather
than deep inside a sampler.
"""

from __future__ import annotations

import csv
import datetime as dt

import numpy as np

from ..cir import RateSeries
from ..crm import ClaimEvent
from ..errors import DataError

EVENTS_HEADER = ("date", "peril", "loss_millions")
RATES_HEADER = ("date", "yield_percent")

_DAYS_PER_YEAR = 365.25


def _read_rows(path, header):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise DataError(f"input file not found: {path}") from None
    if not rows:
        raise DataError(f"{path}: file is empty")
    got = tuple(cell.strip() for cell in rows[0])
    if got != header:
        raise DataError(
            f"{path}: expected header '{','.join(header)}', got '{','.join(got)}'"
        )
    return rows[1:]


def _parse_date(cell, row_no, path):
    try:
        return dt.date.fromisoformat(cell.strip())
    except ValueError:
        raise DataError(
            f"{path} row {row_no}: column 'date' is not an ISO date: {cell!r}"
        ) from None


def _parse_float(cell, row_no, path, column):
    try:
        return float(cell)
    except ValueError:
        raise DataError(
            f"{path} row {row_no}: column '{column}' is not a number: {cell!r}"
        ) from None


def ingest_events(path):
    """Read an event CSV into ClaimEvent records.

    Rows with a nonpositive loss are collected and reported together in
    one error so the file can be fixed in a single pass.
    """
    events = []
    rejected = []
    for offset, row in enumerate(_read_rows(path, EVENTS_HEADER)):
        row_no = offset + 2
        if len(row) != 3:
            raise DataError(
                f"{path} row {row_no}: expected 3 fields, got {len(row)}"
            )
        date = _parse_date(row[0], row_no, path)
        peril = row[1].strip()
        if not peril:
            raise DataError(f"{path} row {row_no}: column 'peril' is empty")
        loss = _parse_float(row[2], row_no, path, "loss_millions")
        if loss <= 0:
            rejected.append(row_no)
            continue
        events.append(ClaimEvent(date=date, peril=peril, loss=loss))
    if rejected:
        raise DataError(
            f"{path}: nonpositive loss_millions in rows "
            f"{', '.join(str(r) for r in rejected)}"
        )
    if not events:
        raise DataError(f"{path}: no events found")
    return events


def ingest_rates(path):
    """Read a yield CSV into a RateSeries of decimal rates.

    Observation dates must be strictly increasing and uniformly spaced
    to within one day; times are measured in years from the first date
    using the mean spacing, so tiny calendar jitter does not leak into
    the time grid.
    """
    dates = []
    yields = []
    for offset, row in enumerate(_read_rows(path, RATES_HEADER)):
        row_no = offset + 2
        if len(row) != 2:
            raise DataError(
                f"{path} row {row_no}: expected 2 fields, got {len(row)}"
            )
        date = _parse_date(row[0], row_no, path)
        value = _parse_float(row[1], row_no, path, "yield_percent")
        if value <= 0:
            raise DataError(
                f"{path} row {row_no}: yield_percent must be positive, got {value}"
            )
        if dates:
            if date == dates[-1]:
                raise DataError(f"{path} row {row_no}: duplicate date {date}")
            if date < dates[-1]:
                raise DataError(
                    f"{path} row {row_no}: dates must be increasing "
                    f"({date} after {dates[-1]})"
                )
        dates.append(date)
        yields.append(value)
    if len(dates) < 2:
        raise DataError(f"{path}: need at least two observations")

    ordinals = np.array([d.toordinal() for d in dates], dtype=float)
    gaps = np.diff(ordinals)
    mean_gap = gaps.mean()
    worst = int(np.argmax(np.abs(gaps - mean_gap)))
    if abs(gaps[worst] - mean_gap) > 1.0:
        raise DataError(
            f"{path}: spacing is not uniform; gap of {gaps[worst]:.0f} days "
            f"between {dates[worst]} and {dates[worst + 1]} against a mean "
            f"spacing of {mean_gap:.2f} days"
        )

    delta_years = mean_gap / _DAYS_PER_YEAR
    times = np.arange(len(dates)) * delta_years
    rates = np.asarray(yields) / 100.0
    return RateSeries(times=times, rates=rates)
