"""In-sample evaluation and expanding-window recession forecasting."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from binfar._parallel import map_ordered
from binfar.data import TargetSpec, assemble_design, month_label, months, parse_month, standardize
from binfar.errors import BinfarError, DegenerateLabelsError, InvalidArgumentError
from binfar.factors import DEFAULT_D_MAX, PanelMatrix, estimate_factors, select_num_factors
from binfar.glm import (
    BinaryFarFit,
    FitOptions,
    LinkFunction,
    fit,
    fitted_probabilities,
    get_link,
    intercept_only_loglik,
    predict_proba,
)
from binfar.metrics import RocCurve, pseudo_r2, roc_auc

log = logging.getLogger(__name__)

DEFAULT_HORIZONS = (1, 3, 6, 9, 12)
# observable proxies used by the comparator probit
DEFAULT_OBSERVED = ("IPMANSICS", "CPIAUCSL", "BAAFFM", "GS1", "T5YFFM", "AWHMAN", "RPI", "S&P 500")
MODELS = ("binary_far", "probit_observed")


@dataclass(frozen=True)
class BacktestData:
    """A balanced, transformed panel with the target and observed regressors on its time index.

    ``recession`` is aligned with ``panel.time_index``; NaN marks months whose
    classification is unknown.
    """

    panel: PanelMatrix
    recession: np.ndarray
    observed: PanelMatrix | None = None

    def __post_init__(self):
        y = np.asarray(self.recession, dtype=np.float64).ravel()
        if y.size != self.panel.t:
            raise InvalidArgumentError(f"{y.size} target values for {self.panel.t} panel rows")
        if self.observed is not None and tuple(self.observed.time_index) != tuple(self.panel.time_index):
            raise InvalidArgumentError("observed regressors must share the panel time index")
        object.__setattr__(self, "recession", y)

    @property
    def dates(self) -> tuple[str, ...]:
        return self.panel.time_index


@dataclass(frozen=True)
class BacktestConfig:
    """Backtest settings.

    ``d_policy`` is ``("fixed", d)`` or ``("ic", d_max)``. Under ``ic`` the
    number of factors is chosen once on the initial window and held, unless
    ``reselect`` is set.
    """

    horizons: tuple = DEFAULT_HORIZONS
    oos_start: str | None = None
    oos_end: str | None = None
    model: str = "binary_far"
    d_policy: tuple = ("ic", DEFAULT_D_MAX)
    link: LinkFunction | str = "probit"
    lag: int = 3
    min_window: int = 60
    reselect: bool = False
    standardize: bool = True
    opts: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        hs = tuple(int(h) for h in self.horizons)
        if not hs or any(h < 1 for h in hs):
            raise InvalidArgumentError("horizons must be positive integers")
        object.__setattr__(self, "horizons", hs)
        if self.model not in MODELS:
            raise InvalidArgumentError(f"model must be one of {MODELS}, got {self.model!r}")
        kind, value = self.d_policy
        if kind not in ("fixed", "ic") or int(value) < 0:
            raise InvalidArgumentError(f"bad d_policy {self.d_policy!r}")
        object.__setattr__(self, "d_policy", (kind, int(value)))
        object.__setattr__(self, "link", get_link(self.link))
        if self.lag < 0 or self.min_window < 1:
            raise InvalidArgumentError("lag must be >= 0 and min_window >= 1")


@dataclass(frozen=True)
class ForecastRecord:
    target_date: str
    horizon: int
    probability: float
    realized: int
    estimation_end: str


@dataclass(frozen=True)
class EvalReport:
    """Evaluation for one horizon; ``error`` is set when the horizon could not be evaluated."""

    horizon: int
    n: int = 0
    d: int = 0
    auc: float = math.nan
    pseudo_r2: float = math.nan
    roc: RocCurve | None = None
    dates: tuple = ()
    probabilities: np.ndarray = field(default_factory=lambda: np.zeros(0))
    realized: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fit: BinaryFarFit | None = None
    failures: int = 0
    error: str = ""

    def to_dict(self) -> dict:
        out = {
            "horizon": self.horizon,
            "n": self.n,
            "d": self.d,
            "auc": None if math.isnan(self.auc) else self.auc,
            "pseudo_r2": None if math.isnan(self.pseudo_r2) else self.pseudo_r2,
            "failures": self.failures,
        }
        if self.error:
            out["error"] = self.error
        if self.fit is not None:
            out["beta"] = self.fit.beta.tolist()
        return out


def _factors_upto(data: BacktestData, end_row: int, d: int, scale: bool) -> PanelMatrix | None:
    if d == 0:
        return None
    sub = data.panel.values[: end_row + 1]
    x = standardize(sub) if scale else sub
    f = estimate_factors(x, d).factors
    return PanelMatrix(f, tuple(f"f{j + 1}" for j in range(d)), data.panel.time_index[: end_row + 1])


def _observed_upto(data: BacktestData, end_row: int, scale: bool) -> PanelMatrix | None:
    if data.observed is None:
        return None
    sub = data.observed.rows(np.arange(end_row + 1))
    # scaling keeps the coefficient cap meaningful and leaves probabilities unchanged
    return standardize(sub) if scale else sub


def _choose_d(data: BacktestData, config: BacktestConfig, end_row: int) -> int:
    if config.model == "probit_observed":
        return 0
    kind, value = config.d_policy
    if kind == "fixed":
        return value
    sub = data.panel.values[: end_row + 1]
    x = standardize(sub) if config.standardize else sub
    return select_num_factors(x, value)[0]


def _blocks(data: BacktestData, config: BacktestConfig, end_row: int, d: int):
    f = _factors_upto(data, end_row, d, config.standardize) if config.model == "binary_far" else None
    w = _observed_upto(data, end_row, config.standardize)
    if f is None and w is None:
        raise InvalidArgumentError(f"{config.model} with d=0 needs observed regressors")
    return f, w


def in_sample(data: BacktestData, config: BacktestConfig) -> dict[int, EvalReport]:
    """Fit on the whole sample (no publication lag) and evaluate each horizon.

    Factors are estimated once from the full panel. The pseudo-R^2 compares
    against the intercept-only model on the same rows. A failing horizon is
    reported through ``EvalReport.error``.
    """
    last = data.panel.t - 1
    d = _choose_d(data, config, last)
    f, w = _blocks(data, config, last, d)
    end = data.dates[last]
    reports = {}
    for h in config.horizons:
        try:
            target = TargetSpec(data.recession, data.dates, 0, h)
            design, row_dates = assemble_design(f, target, end, w)
            res = fit(design, config.link, config.opts)
            probs = fitted_probabilities(res, design)
            roc = roc_auc(probs, design.y)
            r2 = pseudo_r2(res.loglik, intercept_only_loglik(design.y), design.n)
        except BinfarError as exc:
            log.warning("in-sample horizon %d failed: %s", h, exc)
            reports[h] = EvalReport(h, d=d, error=f"{type(exc).__name__}: {exc}")
            continue
        target_dates = tuple(month_label(m + h) for m in months(row_dates))
        reports[h] = EvalReport(
            h, design.n, d, roc.auc, r2, roc, target_dates, probs, design.y.copy(), res
        )
    return reports


def forecast_origins(data: BacktestData, config: BacktestConfig) -> np.ndarray:
    """Row indices of the forecast origins between ``oos_start`` and ``oos_end``."""
    if config.oos_start is None:
        raise InvalidArgumentError("out-of-sample evaluation needs oos_start")
    dates = months(data.dates)
    start = parse_month(config.oos_start)
    end = parse_month(config.oos_end) if config.oos_end else dates[-1]
    rows = np.flatnonzero((dates >= start) & (dates <= end))
    if rows.size == 0 or start < dates[0] or start > dates[-1]:
        raise InvalidArgumentError(f"oos_start {config.oos_start} is outside the sample")
    if rows[0] + 1 < config.min_window:
        raise InvalidArgumentError(
            f"initial window has {rows[0] + 1} months, at least {config.min_window} required"
        )
    return rows


def _forecast_origin(data: BacktestData, config: BacktestConfig, row: int, d: int, row_of: dict):
    """Records (or failure reasons) for every horizon at one origin."""
    origin = data.dates[row]
    base = months([origin])[0]
    out = []
    try:
        f, w = _blocks(data, config, row, d)
    except BinfarError as exc:
        return [(h, None, f"factor step failed: {exc}") for h in config.horizons]
    for h in config.horizons:
        target_row = row_of.get((base + h).item())
        if target_row is None or np.isnan(data.recession[target_row]):
            out.append((h, None, ""))
            continue
        try:
            target = TargetSpec(data.recession, data.dates, config.lag, h)
            design, _ = assemble_design(f, target, origin, w)
            res = fit(design, config.link, config.opts)
            if not res.converged:
                raise BinfarError(f"no convergence after {res.iterations} iterations")
            p = predict_proba(
                res,
                None if w is None else w.values[row],
                None if f is None else f.values[row],
            )
        except BinfarError as exc:
            out.append((h, None, f"{type(exc).__name__}: {exc}"))
            continue
        rec = ForecastRecord(data.dates[target_row], h, p, int(data.recession[target_row]), origin)
        out.append((h, rec, ""))
    return out


def out_of_sample(
    data: BacktestData, config: BacktestConfig, threads: int | None = None
) -> tuple[list[ForecastRecord], dict[int, EvalReport]]:
    """Expanding-window forecasts from every origin in the evaluation window.

    At origin tau the panel is truncated to rows dated <= tau, standardized
    and its factors re-estimated; the model is refitted on pairs whose target
    was published by tau (``config.lag`` months) and P(y_{tau+h} = 1) is
    forecast from the regressors at tau. Origins whose target lies beyond the
    data are skipped silently, failed fits are logged and skipped.

    Returns
    -------
    records : list of ForecastRecord
        Sorted by horizon, then origin.
    reports : dict
        Per-horizon AUC over the records.
    """
    rows = forecast_origins(data, config)
    d_fixed = _choose_d(data, config, int(rows[0]))
    row_of = {m: i for i, m in enumerate(months(data.dates).tolist())}

    def task(row):
        d = _choose_d(data, config, int(row)) if config.reselect else d_fixed
        return _forecast_origin(data, config, int(row), d, row_of)

    results = map_ordered(task, rows.tolist(), threads)
    by_h: dict[int, list[ForecastRecord]] = {h: [] for h in config.horizons}
    failures = {h: 0 for h in config.horizons}
    for row, items in zip(rows, results):
        for h, rec, reason in items:
            if rec is not None:
                by_h[h].append(rec)
            elif reason:
                failures[h] += 1
                log.warning("origin %s, h=%d skipped: %s", data.dates[row], h, reason)

    records = [rec for h in config.horizons for rec in by_h[h]]
    reports = {}
    for h in config.horizons:
        recs = by_h[h]
        probs = np.array([r.probability for r in recs])
        realized = np.array([r.realized for r in recs], dtype=np.float64)
        dates = tuple(r.target_date for r in recs)
        try:
            roc = roc_auc(probs, realized) if recs else None
            if roc is None:
                raise DegenerateLabelsError("no forecasts")
            auc, err = roc.auc, ""
        except BinfarError as exc:
            roc, auc, err = None, math.nan, f"{type(exc).__name__}: {exc}"
        reports[h] = EvalReport(
            h, len(recs), d_fixed, auc, math.nan, roc, dates, probs, realized, None, failures[h], err
        )
    return records, reports


def records_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["target_date", "horizon", "probability", "realized", "estimation_end"])
    for r in records:
        writer.writerow([r.target_date, r.horizon, repr(r.probability), r.realized, r.estimation_end])
    return buf.getvalue()


def fitted_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["target_date", "probability", "realized"])
    for date, p, y in zip(report.dates, report.probabilities, report.realized):
        writer.writerow([date, repr(float(p)), int(y)])
    return buf.getvalue()


def auc_table_csv(reports: dict, label: str) -> str:
    """One row per model, one column per horizon, in a table layout."""
    hs = sorted(reports)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", *(f"h={h}" for h in hs)])
    writer.writerow([label, *("" if math.isnan(reports[h].auc) else f"{reports[h].auc:.3f}" for h in hs)])
    return buf.getvalue()

