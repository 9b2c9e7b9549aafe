"""Forecast evaluation and reporting statistics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from binfar import _kernels
from binfar.errors import (
    DegenerateLabelsError,
    InvalidArgumentError,
    SingularRotationError,
    UndefinedMeasureError,
)
from binfar.factors import FactorEstimate, PanelMatrix


@dataclass(frozen=True)
class RocCurve:
    """ROC points ordered by decreasing threshold.

    The first point is (0, 0) at threshold +inf; each later point classifies
    ``score >= threshold`` as positive, one point per distinct score.
    """

    thresholds: np.ndarray
    tp_rate: np.ndarray
    fp_rate: np.ndarray
    auc: float

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "thresholds": [float(x) for x in self.thresholds],
            "tp_rate": [float(x) for x in self.tp_rate],
            "fp_rate": [float(x) for x in self.fp_rate],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["threshold", "fp_rate", "tp_rate"])
        for th, fp, tp in zip(self.thresholds, self.fp_rate, self.tp_rate):
            writer.writerow([repr(float(th)), repr(float(fp)), repr(float(tp))])
        return buf.getvalue()


def roc_auc(scores, labels) -> RocCurve:
    """ROC curve over all distinct score thresholds and its trapezoidal area.

    Tied scores enter the curve as one diagonal segment, so each tied
    positive/negative pair contributes one half to the area.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise InvalidArgumentError(f"{scores.size} scores for {labels.size} labels")
    if not np.all(np.isfinite(scores)):
        raise InvalidArgumentError("scores must be finite")
    labels = labels.astype(np.int64)
    if not np.all((labels == 0) | (labels == 1)):
        raise InvalidArgumentError("labels must be binary (0/1)")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("labels contain a single class; ROC is undefined")

    order = np.argsort(-scores, kind="mergesort")
    s_sorted = np.ascontiguousarray(scores[order])
    pos, neg = _kernels.auc_counts(s_sorted, np.ascontiguousarray(labels[order]))
    pos = np.concatenate([[0], pos])
    neg = np.concatenate([[0], neg])
    # trapezoids in integer counts: sum of d_neg * (pos_prev + pos_cur), halved
    area2 = int(np.sum(np.diff(neg) * (pos[:-1] + pos[1:])))
    auc = area2 / (2.0 * n_pos * n_neg)

    ends = np.append(np.flatnonzero(np.diff(s_sorted) != 0.0), s_sorted.size - 1)
    thresholds = np.concatenate([[np.inf], s_sorted[ends]])
    return RocCurve(thresholds, pos / n_pos, neg / n_neg, auc)


def pseudo_r2(loglik_unconstrained: float, loglik_constrained: float, n: int) -> float:
    """Estrella's pseudo-R^2: 1 - (log L_u / log L_c) ** (-(2 / n) log L_c)."""
    lu = float(loglik_unconstrained)
    lc = float(loglik_constrained)
    if n <= 0:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    if lu > 0.0 or lc > 0.0:
        raise InvalidArgumentError("log-likelihoods of binary outcomes must be <= 0")
    if lc == 0.0:
        raise UndefinedMeasureError("constrained log-likelihood is 0; pseudo-R^2 is undefined")
    if lc - lu > 1e-10 * abs(lc):
        raise InvalidArgumentError(
            f"constrained log-likelihood {lc} exceeds unconstrained {lu}"
        )
    # the nested model can only beat the full one by optimiser roundoff
    lu = max(lu, lc)
    return 1.0 - (lu / lc) ** (-(2.0 / n) * lc)


def rotate_coefficients(beta_true, h_matrix) -> np.ndarray:
    """Map true coefficients to the rotated target diag(I, H^{-1}) beta.

    The intercept and observed-regressor block are untouched; the trailing d
    factor coefficients are premultiplied by H^{-1}, where d = H.shape[0].
    """
    beta = np.asarray(beta_true, dtype=np.float64).ravel()
    h = np.atleast_2d(np.asarray(h_matrix, dtype=np.float64))
    d = h.shape[0]
    if h.shape != (d, d) or d >= beta.size:
        raise InvalidArgumentError(f"H of shape {h.shape} does not fit beta of length {beta.size}")
    if not np.all(np.isfinite(h)) or np.linalg.cond(h) > 1e14:
        raise SingularRotationError("rotation matrix is singular")
    out = beta.copy()
    out[-d:] = np.linalg.solve(h, beta[-d:])
    return out


@dataclass(frozen=True)
class RmseReport:
    rmse_all: float
    per_coefficient: dict
    replications: int = 0

    def to_dict(self) -> dict:
        return {
            "rmse_all": self.rmse_all,
            "per_coefficient": dict(self.per_coefficient),
            "replications": self.replications,
        }

    def to_csv(self) -> str:
        names = list(self.per_coefficient)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["all", *names])
        writer.writerow([repr(self.rmse_all), *(repr(self.per_coefficient[k]) for k in names)])
        return buf.getvalue()


def coefficient_names(p: int, d: int) -> list[str]:
    return ["cons", *(f"w{j + 1}" for j in range(p)), *(f"f{j + 1}" for j in range(d))]


def rmse(estimates, beta_rotated, names=None) -> RmseReport:
    """Root mean squared error of R estimates against per-replication targets."""
    est = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    tgt = np.atleast_2d(np.asarray(beta_rotated, dtype=np.float64))
    if est.shape != tgt.shape:
        raise InvalidArgumentError(f"shape mismatch: {est.shape} vs {tgt.shape}")
    if est.shape[0] == 0:
        raise InvalidArgumentError("no replications")
    err2 = (est - tgt) ** 2
    k = est.shape[1]
    if names is None:
        names = [f"b{j}" for j in range(k)]
    if len(names) != k:
        raise InvalidArgumentError(f"{len(names)} names for {k} coefficients")
    per = np.sqrt(err2.mean(axis=0))
    return RmseReport(
        rmse_all=float(np.sqrt(err2.sum(axis=1).mean())),
        per_coefficient={name: float(v) for name, v in zip(names, per)},
        replications=est.shape[0],
    )


@dataclass(frozen=True)
class MarginalR2:
    """Incremental explanatory power of each factor for each series.

    ``increments[i, r]`` is the adjusted R^2 of series i on factors 1..r+1 minus
    that on factors 1..r; ``raw_increments`` is the same without the
    degrees-of-freedom correction.
    """

    series_ids: tuple
    increments: np.ndarray
    raw_increments: np.ndarray
    average: np.ndarray

    def top(self, r: int, k: int = 5) -> list[tuple[str, float]]:
        col = self.increments[:, r]
        order = np.argsort(-col, kind="mergesort")[:k]
        return [(self.series_ids[i], float(col[i])) for i in order]

    def to_dict(self) -> dict:
        return {
            "series_ids": list(self.series_ids),
            "average": [float(a) for a in self.average],
            "increments": self.increments.tolist(),
        }


def marginal_r2(panel: PanelMatrix, factors: FactorEstimate) -> MarginalR2:
    """Regress each series on the first r factors (with a constant), r = 1..d."""
    x = panel.values if isinstance(panel, PanelMatrix) else np.asarray(panel, dtype=float)
    ids = panel.series_ids if isinstance(panel, PanelMatrix) else tuple(f"x{i + 1}" for i in range(x.shape[1]))
    f = factors.factors if isinstance(factors, FactorEstimate) else np.atleast_2d(factors)
    t, n = x.shape
    d = f.shape[1]
    if d == 0:
        raise InvalidArgumentError("marginal R^2 needs at least one factor")
    if f.shape[0] != t:
        raise InvalidArgumentError(f"factors have {f.shape[0]} rows, panel has {t}")
    if t - d - 1 <= 0:
        raise InvalidArgumentError("too few observations for the adjusted R^2")
    xc = x - x.mean(axis=0)
    sst = np.sum(xc * xc, axis=0)
    raw = np.zeros((n, d + 1))
    adj = np.zeros((n, d + 1))
    ok = sst > 0.0
    for r in range(1, d + 1):
        z = np.column_stack([np.ones(t), f[:, :r]])
        coef, *_ = np.linalg.lstsq(z, x, rcond=None)
        resid = x - z @ coef
        ssr = np.sum(resid * resid, axis=0)
        r2 = np.where(ok, 1.0 - ssr / np.where(ok, sst, 1.0), 0.0)
        raw[:, r] = r2
        adj[:, r] = 1.0 - (1.0 - r2) * (t - 1) / (t - r - 1)
    increments = np.diff(adj, axis=1)
    raw_inc = np.diff(raw, axis=1)
    return MarginalR2(tuple(ids), increments, raw_inc, increments.mean(axis=0))


def dump_json(obj, fh) -> None:
    json.dump(obj, fh, indent=2, sort_keys=True)
    fh.write("\n")
