"""Moving-block bootstrap for the two-step factor-augmented estimator."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np

from binfar import _rng
from binfar._parallel import map_ordered
from binfar.errors import BinfarError, BootstrapFailureError, InvalidArgumentError
from binfar.factors import PanelMatrix, estimate_factors
from binfar.glm import PROBIT, BinaryFarFit, Design, FitOptions, LinkFunction, fit, get_link
from binfar.metrics import coefficient_names

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BootstrapSpec:
    """L blocks of length q per resample, B resamples, and the RNG seed."""

    num_blocks: int
    block_length: int
    replications: int = 999
    seed: int = 0

    def __post_init__(self):
        if self.num_blocks < 1 or self.block_length < 1:
            raise InvalidArgumentError("num_blocks and block_length must be positive")
        if self.replications < 1:
            raise InvalidArgumentError("replications must be at least 1")
        _rng.check_seed(self.seed)

    @property
    def sample_length(self) -> int:
        return self.num_blocks * self.block_length

    @classmethod
    def from_blocks(cls, n: int, num_blocks: int, replications: int = 999, seed: int = 0) -> "BootstrapSpec":
        """q = floor(n / L) for a sample of n = T - h design rows."""
        q = n // num_blocks
        if q < 1:
            raise InvalidArgumentError(f"{num_blocks} blocks do not fit in {n} observations")
        return cls(num_blocks, q, replications, seed)

    @classmethod
    def from_block_length(cls, n: int, block_length: int, replications: int = 999, seed: int = 0) -> "BootstrapSpec":
        if not 1 <= block_length <= n:
            raise InvalidArgumentError(f"block length {block_length} outside [1, {n}]")
        return cls(n // block_length, block_length, replications, seed)

    @classmethod
    def default(cls, n: int, replications: int = 999, seed: int = 0) -> "BootstrapSpec":
        """Cube-root block length q = ceil(n^(1/3)) and L = floor(n / q)."""
        q = max(1, math.ceil(round(n ** (1.0 / 3.0), 12)))
        return cls.from_block_length(n, q, replications, seed)


@dataclass(frozen=True)
class BootstrapResult:
    draws: np.ndarray
    standard_errors: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    failed_draws: int
    level: float
    estimate: np.ndarray
    names: tuple = ()

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "estimate": self.estimate.tolist(),
            "standard_errors": self.standard_errors.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "level": self.level,
            "failed_draws": self.failed_draws,
            "draws": self.draws.tolist(),
        }

    def to_csv(self) -> str:
        """One row per draw, then estimate / se / ci rows labelled in the first column."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["row", *self.names])
        for i, row in enumerate(self.draws):
            writer.writerow([f"draw{i + 1}", *(repr(float(v)) for v in row)])
        for label, vec in (
            ("estimate", self.estimate),
            ("se", self.standard_errors),
            ("ci_lower", self.ci_lower),
            ("ci_upper", self.ci_upper),
        ):
            writer.writerow([label, *(repr(float(v)) for v in vec)])
        writer.writerow(["failed_draws", self.failed_draws])
        return buf.getvalue()


def fit_two_step(
    x: np.ndarray,
    w: np.ndarray,
    y: np.ndarray,
    d: int,
    link: LinkFunction = PROBIT,
    opts: FitOptions | None = None,
    h: int = 0,
) -> BinaryFarFit:
    """Estimate d factors from rows of ``x`` aligned with ``w``/``y`` and fit the MLE."""
    f = estimate_factors(x, d).factors if d > 0 else None
    return fit(Design(w, f, y, h), link, opts)


def block_starts(spec: BootstrapSpec, replication: int) -> np.ndarray:
    """Uniform block starts on {0, ..., qL - q} for one replication."""
    rng = _rng.stream(spec.seed, replication)
    upper = spec.sample_length - spec.block_length
    return rng.integers(0, upper + 1, size=spec.num_blocks)


def block_rows(starts: np.ndarray, block_length: int) -> np.ndarray:
    return (starts[:, None] + np.arange(block_length)[None, :]).ravel()


def moving_block_bootstrap(
    design: Design,
    panel: PanelMatrix | np.ndarray,
    d: int,
    link: LinkFunction | str = PROBIT,
    spec: BootstrapSpec | None = None,
    level: float = 0.95,
    *,
    opts: FitOptions | None = None,
    threads: int | None = None,
) -> BootstrapResult:
    """Bootstrap distribution of the two-step estimator by resampling time blocks.

    Row t of ``design`` (w_t paired with y_{t+h}) and row t of ``panel`` are
    resampled together in blocks of ``spec.block_length`` consecutive periods.
    The factor columns of ``design`` are ignored: factors are re-estimated from
    each resampled panel with the same ``d`` before the likelihood is refitted.

    When qL < T - h the most recent T - h - qL rows are trimmed first, so block
    starts are drawn on {0, ..., qL - q}. ``estimate`` holds the two-step fit on
    the trimmed sample.

    Returns
    -------
    BootstrapResult
        ``draws`` has one row per converged refit; refits that raise or do not
        converge are counted in ``failed_draws``.
    """
    link = get_link(link)
    x = panel.values if isinstance(panel, PanelMatrix) else np.asarray(panel, dtype=np.float64)
    n = design.n
    if spec is None:
        spec = BootstrapSpec.default(n)
    if not 0.0 < level < 1.0:
        raise InvalidArgumentError(f"level must be in (0, 1), got {level}")
    if n < spec.block_length:
        raise InvalidArgumentError(f"T - h = {n} is shorter than the block length {spec.block_length}")
    if spec.sample_length > n:
        raise InvalidArgumentError(f"qL = {spec.sample_length} exceeds T - h = {n}")
    if x.shape[0] < n:
        raise InvalidArgumentError(f"panel has {x.shape[0]} rows, design needs {n}")

    m = spec.sample_length
    x = x[:m]
    w = design.w[:m]
    y = design.y[:m]
    estimate = fit_two_step(x, w, y, d, link, opts, design.h)

    def one(b: int):
        rows = block_rows(block_starts(spec, b), spec.block_length)
        try:
            res = fit_two_step(x[rows], w[rows], y[rows], d, link, opts, design.h)
        except BinfarError as exc:
            log.debug("bootstrap replication %d failed: %s", b, exc)
            return None
        return res.beta if res.converged else None

    results = map_ordered(one, range(spec.replications), threads)
    kept = [r for r in results if r is not None]
    failed = len(results) - len(kept)
    if not kept:
        raise BootstrapFailureError(f"all {spec.replications} bootstrap refits failed")
    if failed:
        log.info("%d of %d bootstrap refits failed and were dropped", failed, spec.replications)
    draws = np.vstack(kept)
    se = draws.std(axis=0, ddof=1) if draws.shape[0] > 1 else np.zeros(draws.shape[1])
    alpha = (1.0 - level) / 2.0
    lower = np.quantile(draws, alpha, axis=0)
    upper = np.quantile(draws, 1.0 - alpha, axis=0)
    return BootstrapResult(
        draws=draws,
        standard_errors=se,
        ci_lower=lower,
        ci_upper=upper,
        failed_draws=failed,
        level=level,
        estimate=estimate.beta,
        names=tuple(coefficient_names(design.p, d)),
    )
