"""Macro panel ingestion (FRED-MD file convention), transforms, targets and design assembly."""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from binfar.errors import InsufficientDataError, InvalidArgumentError, ParseError, TransformError
from binfar.factors import PanelMatrix
from binfar.glm import Design

log = logging.getLogger(__name__)

MISSING_TOKENS = {"", "na", "nan", "n/a", ".", "null"}
# leading observations lost to each transform code
TCODE_LAG = {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2, 7: 2}
LOG_CODES = {4, 5, 6}

_SLASH = re.compile(r"^\s*(\d{1,2})/(\d{1,2})/(\d{4})\s*$")
_ISO = re.compile(r"^\s*(\d{4})-(\d{1,2})(?:-(\d{1,2}))?\s*$")


def parse_month(text: str) -> np.datetime64:
    """Parse ``m/d/yyyy``, ``yyyy-mm`` or ``yyyy-mm-dd`` to a monthly datetime64."""
    m = _SLASH.match(text)
    if m:
        year, month = int(m.group(3)), int(m.group(1))
    else:
        m = _ISO.match(text)
        if not m:
            raise ValueError(f"unrecognised date {text!r}")
        year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range in {text!r}")
    return np.datetime64(f"{year:04d}-{month:02d}", "M")


def month_label(month: np.datetime64) -> str:
    return str(np.datetime64(month, "M"))


def months(labels) -> np.ndarray:
    return np.array([parse_month(str(s)) for s in labels], dtype="datetime64[M]")


@dataclass(frozen=True)
class SeriesSpec:
    series_id: str
    tcode: int

    def __post_init__(self):
        if self.tcode not in TCODE_LAG:
            raise InvalidArgumentError(f"tcode for {self.series_id} must be 1..7, got {self.tcode}")


def _cell(text: str, line: int, column: str) -> float:
    token = text.strip()
    if token.lower() in MISSING_TOKENS:
        return np.nan
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"non-numeric value {token!r} in column {column}", line) from None


def load_panel(csv_path) -> tuple[PanelMatrix, list[SeriesSpec]]:
    """Read a panel in the FRED-MD layout.

    Line 1 is the header (date column, then series ids), line 2 holds integer
    transform codes, and each later line is a month. Empty cells are kept as
    NaN. Blank trailing lines are ignored. Line numbers in errors are 1-based
    file lines.
    """
    path = Path(csv_path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise ParseError("expected a header, a transform-code row and at least one observation")
    header = [h.strip() for h in rows[0]]
    ids = header[1:]
    if not ids or any(not s for s in ids):
        raise ParseError("header must name every series column", 1)
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate series ids in header", 1)
    tc_row = rows[1]
    if len(tc_row) < len(header):
        raise ParseError(f"transform-code row has {len(tc_row)} cells, header has {len(header)}", 2)
    specs = []
    for sid, cell in zip(ids, tc_row[1 : len(header)]):
        try:
            code = int(float(cell.strip()))
        except ValueError:
            raise ParseError(f"transform code {cell!r} for {sid} is not an integer", 2) from None
        if code not in TCODE_LAG:
            raise ParseError(f"transform code {code} for {sid} is outside 1..7", 2)
        specs.append(SeriesSpec(sid, code))

    dates: list[np.datetime64] = []
    values: list[list[float]] = []
    for lineno, row in enumerate(rows[2:], start=3):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", lineno)
        try:
            month = parse_month(row[0])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if dates and month <= dates[-1]:
            raise ParseError(f"date {row[0]!r} does not follow {month_label(dates[-1])}", lineno)
        dates.append(month)
        values.append([_cell(c, lineno, sid) for c, sid in zip(row[1:], ids)])
    if not values:
        raise ParseError("no observations")
    panel = PanelMatrix(np.array(values), tuple(ids), tuple(month_label(d) for d in dates))
    return panel, specs


def apply_tcode(series, tcode: int, series_id: str = "", dates=None) -> np.ndarray:
    """Apply a FRED-MD transform code.

    1 level, 2 first difference, 3 second difference, 4 log, 5 log difference,
    6 second log difference, 7 first difference of x_t / x_{t-1} - 1. The output
    has the same length as the input with 0, 1 or 2 leading NaNs.
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    if tcode not in TCODE_LAG:
        raise InvalidArgumentError(f"tcode must be 1..7, got {tcode}")
    if tcode in LOG_CODES:
        bad = np.flatnonzero(~np.isnan(x) & (x <= 0.0))
        if bad.size:
            i = int(bad[0])
            when = dates[i] if dates is not None else f"index {i}"
            raise TransformError(
                f"series {series_id or '?'} has nonpositive value {float(x[i])!r} at {when} under log code {tcode}"
            )
        x = np.log(x)

    def diff(v):
        out = np.full_like(v, np.nan)
        out[1:] = v[1:] - v[:-1]
        return out

    if tcode in (1, 4):
        return x.copy()
    if tcode in (2, 5):
        return diff(x)
    if tcode in (3, 6):
        return diff(diff(x))
    growth = np.full_like(x, np.nan)
    growth[1:] = x[1:] / x[:-1] - 1.0
    return diff(growth)


def transform_panel(panel: PanelMatrix, specs) -> PanelMatrix:
    if len(specs) != panel.n:
        raise InvalidArgumentError(f"{len(specs)} specs for {panel.n} series")
    cols = [
        apply_tcode(panel.values[:, j], spec.tcode, spec.series_id, panel.time_index)
        for j, spec in enumerate(specs)
    ]
    return PanelMatrix(np.column_stack(cols), panel.series_ids, panel.time_index)


def balance_panel(panel: PanelMatrix, specs=None, keep=()) -> tuple[PanelMatrix, list[str]]:
    """Drop the leading rows lost to transforms, then series that still have gaps.

    Series listed in ``keep`` are never dropped; rows where they are missing are
    removed instead. Returns the balanced panel and the dropped series ids.
    """
    lead = max((TCODE_LAG[s.tcode] for s in specs), default=0) if specs else 0
    x = panel.values[lead:]
    dates = panel.time_index[lead:]
    keep = set(keep)
    complete = ~np.isnan(x).any(axis=0)
    cols = [j for j, sid in enumerate(panel.series_ids) if complete[j] or sid in keep]
    dropped = [sid for j, sid in enumerate(panel.series_ids) if j not in set(cols)]
    x = x[:, cols]
    rows = ~np.isnan(x).any(axis=1)
    if not rows.any():
        raise InsufficientDataError("no complete rows remain after balancing")
    if dropped:
        log.info("dropped %d series with missing values: %s", len(dropped), ", ".join(dropped))
    ids = tuple(panel.series_ids[j] for j in cols)
    return PanelMatrix(x[rows], ids, tuple(d for d, r in zip(dates, rows) if r)), dropped


def standardize(x):
    """Column-wise mean 0, standard deviation 1 (ddof=1); constant columns are only centred."""
    # a fixed memory layout keeps the column reductions reproducible bit for bit
    values = np.ascontiguousarray(x.values if isinstance(x, PanelMatrix) else x, dtype=np.float64)
    mu = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1)
    sd = np.where(sd > 0.0, sd, 1.0)
    out = (values - mu) / sd
    if isinstance(x, PanelMatrix):
        return PanelMatrix(out, x.series_ids, x.time_index)
    return out


@dataclass(frozen=True)
class RecessionSeries:
    """Monthly 0/1 recession indicator.

    Months outside ``dates`` take ``fill``: NaN (unknown) for an indicator file,
    0 for a peak/trough file, where every month outside a range is an expansion.
    """

    dates: np.ndarray
    values: np.ndarray
    fill: float = np.nan

    def align(self, labels) -> np.ndarray:
        lookup = {d: v for d, v in zip(self.dates.tolist(), self.values.tolist())}
        return np.array([lookup.get(d, self.fill) for d in months(labels).tolist()], dtype=np.float64)

    def episodes(self) -> int:
        v = np.nan_to_num(self.values, nan=0.0)
        return int(np.sum((v[1:] == 1) & (v[:-1] == 0)) + (v[0] == 1 if v.size else 0))


def recessions_from_ranges(ranges, start=None, end=None) -> RecessionSeries:
    """Months from the one after each peak through the trough are recession months."""
    pairs = [(parse_month(str(p)), parse_month(str(t))) for p, t in ranges]
    if not pairs:
        raise InvalidArgumentError("no peak/trough pairs")
    lo = parse_month(str(start)) if start is not None else min(p for p, _ in pairs)
    hi = parse_month(str(end)) if end is not None else max(t for _, t in pairs)
    dates = np.arange(lo, hi + 1, dtype="datetime64[M]")
    values = np.zeros(dates.size)
    for peak, trough in pairs:
        if trough < peak:
            raise InvalidArgumentError(f"trough {trough} precedes peak {peak}")
        values[(dates > peak) & (dates <= trough)] = 1.0
    return RecessionSeries(dates, values, 0.0)


def load_recessions(path, start=None, end=None) -> RecessionSeries:
    """Read either a (date, 0/1) CSV or a (peak, trough) date-range CSV.

    The format is detected from the first data row: a date in the second column
    means a range file.
    """
    with Path(path).open(newline="", encoding="utf-8-sig") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ParseError("recession file has no data rows")
    body = rows[1:]
    try:
        parse_month(body[0][1])
        is_range = True
    except (ValueError, IndexError):
        is_range = False
    if is_range:
        return recessions_from_ranges([(r[0], r[1]) for r in body], start, end)
    dates = []
    values = []
    for lineno, row in enumerate(body, start=2):
        if len(row) < 2:
            raise ParseError("expected date and indicator columns", lineno)
        try:
            dates.append(parse_month(row[0]))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        v = _cell(row[1], lineno, "indicator")
        if not (np.isnan(v) or v in (0.0, 1.0)):
            raise ParseError(f"indicator must be 0 or 1, got {row[1]!r}", lineno)
        values.append(v)
    dates_arr = np.array(dates, dtype="datetime64[M]")
    if np.any(np.diff(dates_arr).astype(int) <= 0):
        raise ParseError("recession dates are not increasing")
    return RecessionSeries(dates_arr, np.array(values))


@dataclass(frozen=True)
class TargetSpec:
    """Binary target on ``dates`` with its publication lag (months) and horizon."""

    recession_indicator: np.ndarray
    dates: tuple
    publication_lag_months: int = 3
    horizon: int = 1

    def __post_init__(self):
        y = np.asarray(self.recession_indicator, dtype=np.float64).ravel()
        if len(self.dates) != y.size:
            raise InvalidArgumentError(f"{len(self.dates)} dates for {y.size} target values")
        if self.publication_lag_months < 0:
            raise InvalidArgumentError("publication lag must be nonnegative")
        if self.horizon < 0:
            raise InvalidArgumentError("horizon must be nonnegative")
        object.__setattr__(self, "recession_indicator", y)
        object.__setattr__(self, "dates", tuple(str(d) for d in self.dates))


def assemble_design(
    panel: PanelMatrix | None,
    target: TargetSpec,
    estimation_end,
    observed_regressors: PanelMatrix | None = None,
) -> tuple[Design, tuple[str, ...]]:
    """Pair regressors dated t with y_{t+h} using only targets published by ``estimation_end``.

    ``panel`` supplies the factor block and ``observed_regressors`` the observed
    block; both are matched to the target by date. A pair is kept when its
    target date is at most ``estimation_end`` minus the publication lag, the
    target is known and no regressor is missing. Row order is chronological.

    Returns
    -------
    design : Design
    row_dates : tuple of str
        Regressor date of each design row.
    """
    if panel is None and observed_regressors is None:
        raise InvalidArgumentError("need a factor panel or observed regressors")
    base = panel if panel is not None else observed_regressors
    end = parse_month(str(estimation_end))
    reg_dates = months(base.time_index)
    if end.item() not in set(reg_dates.tolist()):
        raise InvalidArgumentError(f"estimation end {month_label(end)} is not in the regressor index")
    if observed_regressors is not None and panel is not None:
        if tuple(observed_regressors.time_index) != tuple(panel.time_index):
            raise InvalidArgumentError("factor panel and observed regressors must share a time index")
    y_lookup = dict(zip(months(target.dates).tolist(), target.recession_indicator.tolist()))
    h = target.horizon
    last_target = end - target.publication_lag_months

    rows, ys = [], []
    for i, t in enumerate(reg_dates):
        if t > end:
            break
        s = t + h
        if s > last_target:
            continue
        y = y_lookup.get(s.item(), np.nan)
        if np.isnan(y):
            continue
        if panel is not None and np.isnan(panel.values[i]).any():
            continue
        if observed_regressors is not None and np.isnan(observed_regressors.values[i]).any():
            continue
        rows.append(i)
        ys.append(y)
    if not rows:
        raise InsufficientDataError(
            f"no usable observations up to {month_label(end)} with lag {target.publication_lag_months} and h={h}"
        )
    rows_arr = np.array(rows)
    f = panel.values[rows_arr] if panel is not None else None
    w = observed_regressors.values[rows_arr] if observed_regressors is not None else None
    row_dates = tuple(base.time_index[i] for i in rows)
    return Design(w, f, np.array(ys), h, row_dates), row_dates
