"""Simulation designs for the binary factor-augmented model and a Monte Carlo driver."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from binfar import _kernels, _rng
from binfar._parallel import map_ordered
from binfar.errors import BinfarError, InvalidArgumentError
from binfar.factors import PanelMatrix, estimate_factors, rotation_matrix, select_num_factors
from binfar.glm import Design, FitOptions, fit, fitted_probabilities, get_link
from binfar.metrics import RmseReport, coefficient_names, rmse, roc_auc, rotate_coefficients

log = logging.getLogger(__name__)

BETA_TRUE = np.array([-2.0, 1.0, 1.0, 1.0, 1.0])  # (cons, w1, w2, f1, f2)
FACTOR_AR = np.array([0.8, 0.64])
DGP_RHO = {1: 0.0, 2: 0.3, 3: 0.7}
EXAMPLE_LINK = {1: "normal", 2: "logistic_unit_variance"}
LOGISTIC_UNIT_SCALE = math.sqrt(3.0) / math.pi


@dataclass(frozen=True)
class DgpConfig:
    """One cell of the simulation design.

    ``error_link`` selects the distribution family: with
    ``"logistic_unit_variance"`` every normal draw of the design (factor
    innovations, idiosyncratic panel noise and the outcome error) is replaced by
    a zero-mean, unit-variance logistic draw.
    """

    n: int
    t: int
    error_link: str = "normal"
    rho_eps: float = 0.0
    seed: int = 0
    h: int = 1
    label: str = ""

    def __post_init__(self):
        if self.n < 10 or self.t < 10:
            raise InvalidArgumentError(f"need n, t >= 10, got n={self.n}, t={self.t}")
        if self.error_link not in ("normal", "logistic_unit_variance"):
            raise InvalidArgumentError(f"unknown error_link {self.error_link!r}")
        if not 0.0 <= self.rho_eps < 1.0:
            raise InvalidArgumentError(f"rho_eps must be in [0, 1), got {self.rho_eps}")
        if self.h != 1:
            raise InvalidArgumentError("the simulation design uses h = 1")
        _rng.check_seed(self.seed)

    @property
    def fit_link(self) -> str:
        return "probit" if self.error_link == "normal" else "logistic_unit_variance"

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "t": self.t,
            "error_link": self.error_link,
            "rho_eps": self.rho_eps,
            "seed": self.seed,
            "h": self.h,
            "label": self.label,
        }


def preset(example: int, dgp: int, n: int, t: int, seed: int = 0) -> DgpConfig:
    """Example 1 (normal) or 2 (logistic) crossed with DGP1 (iid), DGP2 (AR 0.3), DGP3 (AR 0.7)."""
    if example not in EXAMPLE_LINK or dgp not in DGP_RHO:
        raise InvalidArgumentError(f"unknown preset example={example} dgp={dgp}")
    return DgpConfig(n, t, EXAMPLE_LINK[example], DGP_RHO[dgp], seed, 1, f"Example {example} / DGP{dgp}")


@dataclass(frozen=True)
class SimDraw:
    panel: PanelMatrix
    w: np.ndarray
    f_true: np.ndarray
    loadings_true: np.ndarray
    y: np.ndarray
    beta_true: np.ndarray
    eps: np.ndarray
    config: DgpConfig

    def design(self, f=None) -> Design:
        """Rows t = 1..T-1 pairing (w_t, f_t) with y_{t+1}; ``f`` defaults to the true factors."""
        f = self.f_true if f is None else np.asarray(f)
        m = self.y.shape[0]
        return Design(self.w[:m], f[:m], self.y, self.config.h)


def _noise(rng: np.random.Generator, size, family: str) -> np.ndarray:
    if family == "normal":
        return rng.standard_normal(size)
    return rng.logistic(0.0, LOGISTIC_UNIT_SCALE, size)


def generate(config: DgpConfig, replication: int | None = None) -> SimDraw:
    """Draw one data set.

    Draws come from ``stream(config.seed)`` or, for Monte Carlo replication r,
    ``stream(config.seed, r)``, in this order: w (T x 2 uniforms), initial
    factor values f_0 ~ U(0, 2), factor innovations (T x 2), loadings
    ~ U(0, 6) (N x 2), panel noise (T x N), outcome errors (T).

    The AR recursions start from the stated initial values with no burn-in. The
    AR(1) outcome error starts at eps_1 = nu_1 so its marginal variance is one
    throughout.
    """
    n, t = config.n, config.t
    rng = _rng.stream(config.seed) if replication is None else _rng.stream(config.seed, replication)
    family = config.error_link

    u = rng.random((t, 2))
    w = np.column_stack([2.0 * u[:, 0], -3.0 + 6.0 * u[:, 1]])
    f0 = rng.uniform(0.0, 2.0, size=2)
    kappa = _noise(rng, (t, 2), family)
    f = np.empty((t, 2))
    for i in range(2):
        rho = FACTOR_AR[i]
        f[:, i] = _kernels.ar1(np.ascontiguousarray(kappa[:, i]), rho, f0[i], math.sqrt(1.0 - rho * rho))
    lam = rng.uniform(0.0, 6.0, size=(n, 2))
    gamma = _noise(rng, (t, n), family)
    x = f @ lam.T + gamma

    nu = _noise(rng, t, family)
    rho_e = config.rho_eps
    eps = np.empty(t)
    eps[0] = nu[0]
    eps[1:] = _kernels.ar1(np.ascontiguousarray(nu[1:]), rho_e, nu[0], math.sqrt(1.0 - rho_e * rho_e))

    z = np.column_stack([np.ones(t), w, f])
    index = z[: t - 1] @ BETA_TRUE
    y = (index - eps[1:] >= 0.0).astype(np.float64)
    return SimDraw(PanelMatrix(x), w, f, lam, y, BETA_TRUE.copy(), eps, config)


def factor_error(f_hat: np.ndarray, f_true: np.ndarray, h: np.ndarray) -> float:
    """(1/T) sum_t ||f~_t - H' f_t||^2."""
    diff = f_hat - f_true @ h
    return float(np.mean(np.sum(diff * diff, axis=1)))


@dataclass(frozen=True)
class Replication:
    beta_hat: np.ndarray | None
    beta_rotated: np.ndarray | None
    auc: float
    d_hat: int
    factor_mse: float
    error: str = ""


def run_replication(
    config: DgpConfig,
    replication: int,
    use_ic: bool = False,
    d_max: int = 8,
    opts: FitOptions | None = None,
) -> Replication:
    draw = generate(config, replication)
    d0 = draw.f_true.shape[1]
    d = select_num_factors(draw.panel, d_max)[0] if use_ic else d0
    if d == 0:
        return Replication(None, None, math.nan, 0, math.nan, "no factors selected")
    est = estimate_factors(draw.panel, d)
    beta_rot = None
    fmse = math.nan
    if d == d0:
        h = rotation_matrix(est, draw.f_true, draw.loadings_true)
        beta_rot = rotate_coefficients(draw.beta_true, h)
        fmse = factor_error(est.factors, draw.f_true, h)
    design = draw.design(est.factors)
    try:
        res = fit(design, get_link(config.fit_link), opts)
        if not res.converged:
            raise BinfarError(f"no convergence after {res.iterations} iterations")
        auc = roc_auc(fitted_probabilities(res, design), design.y).auc
    except BinfarError as exc:
        return Replication(None, beta_rot, math.nan, d, fmse, f"{type(exc).__name__}: {exc}")
    return Replication(res.beta, beta_rot, auc, d, fmse)


@dataclass(frozen=True)
class CellResult:
    config: DgpConfig
    replications: tuple = field(repr=False)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.replications if r.beta_hat is None)

    @property
    def d_hat(self) -> np.ndarray:
        return np.array([r.d_hat for r in self.replications])

    def _rotatable(self):
        return [r for r in self.replications if r.beta_hat is not None and r.beta_rotated is not None]

    @property
    def estimates(self) -> np.ndarray:
        return np.array([r.beta_hat for r in self._rotatable()]).reshape(-1, BETA_TRUE.size)

    @property
    def targets(self) -> np.ndarray:
        return np.array([r.beta_rotated for r in self._rotatable()]).reshape(-1, BETA_TRUE.size)

    def rmse(self) -> RmseReport:
        return rmse(self.estimates, self.targets, coefficient_names(2, 2))

    @property
    def aucs(self) -> np.ndarray:
        return np.array([r.auc for r in self.replications if r.beta_hat is not None])

    def auc_summary(self) -> dict:
        a = self.aucs
        if a.size == 0:
            return {"mean": math.nan, "median": math.nan, "std": math.nan}
        return {"mean": float(a.mean()), "median": float(np.median(a)), "std": float(a.std())}

    def factor_mse(self) -> float:
        vals = np.array([r.factor_mse for r in self.replications])
        return float(np.nanmean(vals))

    def summary(self) -> dict:
        out = {
            "config": self.config.to_dict(),
            "replications": len(self.replications),
            "failures": self.failures,
            "factor_mse": self.factor_mse(),
            "d_hat_counts": {int(k): int(v) for k, v in zip(*np.unique(self.d_hat, return_counts=True))},
        }
        if self.estimates.shape[0]:
            out["rmse"] = self.rmse().to_dict()
        if self.aucs.size:
            out["auc"] = self.auc_summary()
        errors: dict[str, int] = {}
        for r in self.replications:
            if r.error:
                key = r.error.split(":", 1)[0]
                errors[key] = errors.get(key, 0) + 1
        out["errors"] = errors
        return out


@dataclass(frozen=True)
class StudyResult:
    cells: tuple

    def cell(self, n: int, t: int, label: str | None = None) -> CellResult:
        for c in self.cells:
            if c.config.n == n and c.config.t == t and (label is None or c.config.label == label):
                return c
        raise KeyError((n, t, label))

    def _grid(self):
        labels = list(dict.fromkeys(c.config.label for c in self.cells))
        ns = sorted({c.config.n for c in self.cells})
        ts = sorted({c.config.t for c in self.cells})
        return labels, ns, ts

    def rmse_table_csv(self) -> str:
        """RMSE_all and per-coefficient RMSEs, one row per (panel, N), columns metric x T."""
        labels, ns, ts = self._grid()
        metrics = ["all", *coefficient_names(2, 2)]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["panel", "N", *(f"{m}_T{t}" for m in metrics for t in ts)])
        for label in labels:
            for n in ns:
                row = [label, n]
                for m in metrics:
                    for t in ts:
                        try:
                            rep = self.cell(n, t, label).rmse()
                        except (KeyError, InvalidArgumentError):
                            row.append("")
                            continue
                        val = rep.rmse_all if m == "all" else rep.per_coefficient[m]
                        row.append(f"{val:.6f}")
                writer.writerow(row)
        return buf.getvalue()

    def auc_table_csv(self) -> str:
        labels, ns, ts = self._grid()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        stats = ["mean", "median", "std"]
        writer.writerow(["panel", "N", *(f"auc_{s}_T{t}" for s in stats for t in ts)])
        for label in labels:
            for n in ns:
                row = [label, n]
                for s in stats:
                    for t in ts:
                        try:
                            row.append(f"{self.cell(n, t, label).auc_summary()[s]:.6f}")
                        except (KeyError, ValueError):
                            row.append("")
                writer.writerow(row)
        return buf.getvalue()

    def replications_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = coefficient_names(2, 2)
        writer.writerow(
            ["panel", "N", "T", "rep", "d_hat", "auc", "factor_mse",
             *(f"hat_{c}" for c in names), *(f"rot_{c}" for c in names), "error"]
        )
        for c in self.cells:
            for i, r in enumerate(c.replications):
                hat = [""] * 5 if r.beta_hat is None else [repr(float(v)) for v in r.beta_hat]
                rot = [""] * 5 if r.beta_rotated is None else [repr(float(v)) for v in r.beta_rotated]
                writer.writerow(
                    [c.config.label, c.config.n, c.config.t, i, r.d_hat, repr(r.auc), repr(r.factor_mse),
                     *hat, *rot, r.error]
                )
        return buf.getvalue()

    def manifest(self) -> dict:
        return {"cells": [c.summary() for c in self.cells]}


def run_study(
    grid,
    replications: int,
    use_ic: bool = False,
    *,
    d_max: int = 8,
    opts: FitOptions | None = None,
    threads: int | None = None,
) -> StudyResult:
    """Monte Carlo over every configuration in ``grid``.

    Each replication generates data, estimates the factors (d = 2, or chosen by
    the information criterion when ``use_ic``), rotates the true coefficients by
    that replication's H, fits the MLE with the matching link and records the
    in-sample AUC. Failed fits are kept as records with an error message and
    excluded from the RMSE and AUC summaries.
    """
    if replications < 1:
        raise InvalidArgumentError("replications must be at least 1")
    cells = []
    for config in grid:
        reps = map_ordered(
            lambda r, cfg=config: run_replication(cfg, r, use_ic, d_max, opts),
            range(replications),
            threads,
        )
        cell = CellResult(config, tuple(reps))
        if cell.failures:
            log.info("%s N=%d T=%d: %d failed replications", config.label, config.n, config.t, cell.failures)
        cells.append(cell)
    return StudyResult(tuple(cells))
