"""Principal-component factor estimation and factor-count selection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from binfar.errors import (
    DegenerateSpectrumWarning,
    InvalidArgumentError,
    NumericalFailureError,
    SingularRotationError,
)

DEFAULT_D_MAX = 15
# relative tie tolerance between the d-th and (d+1)-th eigenvalue
SPECTRUM_TIE_RTOL = 1e-10
# residual mean squares below this fraction of the raw second moment count as exact fits
SSR_FLOOR_RTOL = 1e-20


@dataclass(frozen=True)
class PanelMatrix:
    """A T x N panel of predictors: rows are periods, columns are series."""

    values: np.ndarray
    series_ids: tuple[str, ...] = ()
    time_index: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True, order="C")
        if values.ndim != 2:
            raise InvalidArgumentError(f"panel must be 2-D, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        t, n = values.shape
        ids = tuple(self.series_ids) or tuple(f"x{i + 1}" for i in range(n))
        idx = tuple(self.time_index) or tuple(str(i + 1) for i in range(t))
        if len(ids) != n:
            raise InvalidArgumentError(f"{len(ids)} series ids for {n} columns")
        if len(idx) != t:
            raise InvalidArgumentError(f"{len(idx)} time labels for {t} rows")
        object.__setattr__(self, "series_ids", ids)
        object.__setattr__(self, "time_index", idx)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def rows(self, index) -> "PanelMatrix":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return PanelMatrix(
            self.values[index],
            self.series_ids,
            tuple(self.time_index[i] for i in index),
        )

    def columns(self, names: Sequence[str]) -> "PanelMatrix":
        pos = {s: i for i, s in enumerate(self.series_ids)}
        missing = [s for s in names if s not in pos]
        if missing:
            raise InvalidArgumentError(f"unknown series: {', '.join(missing)}")
        cols = [pos[s] for s in names]
        return PanelMatrix(self.values[:, cols], tuple(names), self.time_index)


@dataclass(frozen=True)
class FactorEstimate:
    """Output of :func:`estimate_factors`.

    Attributes
    ----------
    factors : ndarray, shape (T, d)
        Estimated factors, normalised so ``factors.T @ factors / T = I``.
    loadings : ndarray, shape (N, d)
    eigenvalues : ndarray, shape (d,)
        Leading eigenvalues of ``X X' / (N T)`` in descending order.
    total_variance : float
        Trace of ``X X' / (N T)``, the denominator of the explained share.
    rotation : ndarray or None
        The matrix H linking the estimates to known true factors.
    degenerate : bool
        True when eigenvalue d ties eigenvalue d + 1.
    """

    factors: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray
    total_variance: float
    rotation: np.ndarray | None = None
    degenerate: bool = False

    def __post_init__(self):
        for name in ("factors", "loadings", "eigenvalues", "rotation"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=np.float64, copy=True)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def d(self) -> int:
        return self.factors.shape[1]

    @property
    def explained_fraction(self) -> float:
        """Share of total panel variation captured by the d factors."""
        return float(self.eigenvalues.sum() / self.total_variance)

    def common_component(self) -> np.ndarray:
        return self.factors @ self.loadings.T

    def to_dict(self) -> dict:
        out = {
            "d": self.d,
            "factors": self.factors.tolist(),
            "loadings": self.loadings.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "total_variance": self.total_variance,
            "degenerate": self.degenerate,
        }
        if self.rotation is not None:
            out["rotation"] = self.rotation.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FactorEstimate":
        d = int(data["d"])
        t = len(data["factors"])
        n = len(data["loadings"])
        rot = data.get("rotation")
        return cls(
            factors=np.asarray(data["factors"], dtype=float).reshape(t, d),
            loadings=np.asarray(data["loadings"], dtype=float).reshape(n, d),
            eigenvalues=np.asarray(data["eigenvalues"], dtype=float),
            total_variance=float(data["total_variance"]),
            rotation=None if rot is None else np.asarray(rot, dtype=float),
            degenerate=bool(data.get("degenerate", False)),
        )


def _as_values(x) -> np.ndarray:
    values = x.values if isinstance(x, PanelMatrix) else np.asarray(x, dtype=np.float64)
    if values.ndim != 2:
        raise InvalidArgumentError(f"panel must be 2-D, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError("panel contains missing or non-finite values")
    t, n = values.shape
    if t < 2 or n < 2:
        raise InvalidArgumentError(f"panel must have T >= 2 and N >= 2, got {values.shape}")
    return values


def _sign_normalize(factors: np.ndarray, loadings: np.ndarray) -> None:
    # each loading column sums to >= 0; exact zero sums fall back to the first nonzero entry
    for j in range(loadings.shape[1]):
        s = loadings[:, j].sum()
        if s == 0.0:
            nz = np.flatnonzero(loadings[:, j])
            s = loadings[nz[0], j] if nz.size else 1.0
        if s < 0.0:
            loadings[:, j] *= -1.0
            factors[:, j] *= -1.0


def _spectrum(values: np.ndarray, kmax: int, route: str = "auto"):
    """Top ``kmax`` eigenpairs of X X' / (N T) expressed as scaled factors.

    Returns factors (T x kmax), eigenvalues (all, descending) and the trace.
    """
    t, n = values.shape
    if route == "auto":
        route = "time" if t <= n else "cross"
    try:
        if route == "time":
            gram = values @ values.T / (n * t)
            evals, evecs = np.linalg.eigh(gram)
        else:
            gram = values.T @ values / (n * t)
            evals, evecs = np.linalg.eigh(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigensolver did not converge: {exc}") from exc
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    evecs = evecs[:, order[:kmax]]
    if route == "time":
        factors = np.sqrt(t) * evecs
    else:
        lead = evals[:kmax]
        if lead[-1] <= 1e-13 * evals[0]:
            # rank-deficient panel: X v carries no direction, so solve the T x T problem
            return _spectrum(values, kmax, "time")
        # u = X v / ||X v|| with ||X v||^2 = N T mu, and F = sqrt(T) u
        factors = values @ evecs / np.sqrt(n * lead)
    return factors, evals, float(np.trace(gram))


def estimate_factors(x, d: int, *, route: str = "auto") -> FactorEstimate:
    """Estimate ``d`` factors of a T x N panel by principal components.

    The factors are sqrt(T) times the leading eigenvectors of X X' / (N T) and the
    loadings are X' F / T. The eigenproblem is solved on whichever Gram matrix is
    smaller; pass ``route="time"`` or ``route="cross"`` to force one.
    """
    values = _as_values(x)
    t, n = values.shape
    if not isinstance(d, (int, np.integer)) or not 1 <= d <= min(n, t):
        raise InvalidArgumentError(f"d must be an integer in [1, {min(n, t)}], got {d!r}")
    d = int(d)
    factors, evals, trace = _spectrum(values, d, route)
    factors = np.array(factors)
    loadings = values.T @ factors / t
    _sign_normalize(factors, loadings)

    degenerate = False
    if d < evals.size:
        lead, nxt = evals[d - 1], evals[d]
        if abs(lead - nxt) <= SPECTRUM_TIE_RTOL * max(abs(lead), np.finfo(float).tiny):
            degenerate = True
            warnings.warn(
                f"eigenvalues {d} and {d + 1} coincide ({lead:.6g}); factors are not identified",
                DegenerateSpectrumWarning,
                stacklevel=2,
            )
    return FactorEstimate(factors, loadings, evals[:d].copy(), trace, None, degenerate)


def rotation_matrix(estimate: FactorEstimate, true_factors, true_loadings, *, tol: float = 1e-12) -> np.ndarray:
    """H = (L'L / N)(F' F~ / T) V^{-1} for known factors F and loadings L."""
    f = np.asarray(true_factors, dtype=np.float64)
    lam = np.asarray(true_loadings, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    if lam.ndim == 1:
        lam = lam[:, None]
    t, d = estimate.factors.shape
    n = estimate.loadings.shape[0]
    if f.shape != (t, f.shape[1]) or lam.shape != (n, f.shape[1]):
        raise InvalidArgumentError(
            f"true factors {f.shape} / loadings {lam.shape} do not match the estimate (T={t}, N={n})"
        )
    v = estimate.eigenvalues
    if np.any(v <= tol):
        raise SingularRotationError("eigenvalue at or below tolerance; V_NT is not invertible")
    return (lam.T @ lam / n) @ (f.T @ estimate.factors / t) / v[None, :]


def with_rotation(estimate: FactorEstimate, true_factors, true_loadings) -> FactorEstimate:
    return replace(estimate, rotation=rotation_matrix(estimate, true_factors, true_loadings))


def ic_values(x, d_max: int = DEFAULT_D_MAX) -> np.ndarray:
    values = _as_values(x)
    t, n = values.shape
    if not isinstance(d_max, (int, np.integer)) or not 1 <= d_max <= min(n, t) - 1:
        raise InvalidArgumentError(f"d_max must be in [1, {min(n, t) - 1}], got {d_max!r}")
    factors, _, _ = _spectrum(values, int(d_max))
    c_nt = n * t / (n + t)
    v0 = float(np.sum(values * values)) / (n * t)
    floor = SSR_FLOOR_RTOL * v0
    out = np.empty(d_max + 1)
    out[0] = np.log(v0)
    for d in range(1, d_max + 1):
        f = factors[:, :d]
        resid = values - f @ (values.T @ f / t).T
        v = max(float(np.sum(resid * resid)) / (n * t), floor)
        out[d] = np.log(v) + d * np.log(c_nt) / c_nt
    return out


def select_num_factors(x, d_max: int = DEFAULT_D_MAX) -> tuple[int, np.ndarray]:
    """Choose the factor count by minimising the information criterion.

    IC(d) = log(SSR_d / (N T)) + d log(C) / C with C = N T / (N + T), for
    d = 0..d_max. Ties resolve to the smallest d.

    Returns
    -------
    d_hat : int
    ic : ndarray, shape (d_max + 1,)
    """
    ic = ic_values(x, d_max)
    return int(np.argmin(ic)), ic
