"""Binary-response likelihood, Newton maximum likelihood and predicted probabilities."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from binfar import _kernels
from binfar.errors import (
    DegenerateOutcomeError,
    InvalidArgumentError,
    SeparationError,
    SingularDesignError,
)

log = logging.getLogger(__name__)

PROB_FLOOR = _kernels.PROB_FLOOR
RIDGE = 1e-10


@dataclass(frozen=True)
class LinkFunction:
    """CDF of the latent error together with its density and density derivative.

    ``kind`` is ``"probit"`` (standard normal) or ``"logistic_unit_variance"``,
    the logistic distribution rescaled to unit variance.
    """

    kind: str = "probit"

    def __post_init__(self):
        if self.kind not in _LINK_CODES:
            raise InvalidArgumentError(
                f"unknown link {self.kind!r}; expected one of {sorted(_LINK_CODES)}"
            )

    @property
    def code(self) -> int:
        return _LINK_CODES[self.kind]

    def cdf(self, x):
        return _kernels.link_eval_numpy(x, self.code)[0]

    def sf(self, x):
        return _kernels.link_eval_numpy(x, self.code)[1]

    def pdf(self, x):
        return _kernels.link_eval_numpy(x, self.code)[2]

    def pdf_prime(self, x):
        return _kernels.link_eval_numpy(x, self.code)[3]

    def ppf(self, p):
        from scipy import special

        p = np.asarray(p, dtype=np.float64)
        if self.code == _kernels.PROBIT:
            return special.ndtri(p)
        return special.logit(p) / _kernels.LOGISTIC_SCALE


_LINK_CODES = {"probit": _kernels.PROBIT, "logistic_unit_variance": _kernels.LOGISTIC}
_ALIASES = {"normal": "probit", "logistic": "logistic_unit_variance", "logit": "logistic_unit_variance"}


def get_link(link: "LinkFunction | str") -> LinkFunction:
    if isinstance(link, LinkFunction):
        return link
    return LinkFunction(_ALIASES.get(link, link))


PROBIT = LinkFunction("probit")
LOGISTIC = LinkFunction("logistic_unit_variance")


def _matrix(a, n: int | None = None) -> np.ndarray:
    if a is None:
        return np.zeros((0 if n is None else n, 0))
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    return a


@dataclass(frozen=True)
class Design:
    """Regressors dated t paired with the outcome y_{t+h}.

    ``w`` holds the p observed regressors and ``f`` the d factor regressors;
    either block may have zero columns. ``dates`` optionally labels each row with
    its regressor date.
    """

    w: np.ndarray
    f: np.ndarray
    y: np.ndarray
    h: int = 0
    dates: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).ravel()
        n = y.shape[0]
        w = _matrix(self.w, n)
        f = _matrix(self.f, n)
        if w.shape[0] != n or f.shape[0] != n:
            raise InvalidArgumentError(
                f"row mismatch: w has {w.shape[0]}, f has {f.shape[0]}, y has {n}"
            )
        if not np.all((y == 0.0) | (y == 1.0)):
            raise InvalidArgumentError("y must be binary (0/1)")
        if self.h < 0:
            raise InvalidArgumentError(f"horizon must be nonnegative, got {self.h}")
        if self.dates and len(self.dates) != n:
            raise InvalidArgumentError(f"{len(self.dates)} dates for {n} rows")
        for name, arr in (("w", w), ("f", f), ("y", y)):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "dates", tuple(self.dates))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.w.shape[1]

    @property
    def d(self) -> int:
        return self.f.shape[1]

    @property
    def k(self) -> int:
        return 1 + self.p + self.d

    @property
    def z(self) -> np.ndarray:
        return np.ascontiguousarray(np.column_stack([np.ones(self.n), self.w, self.f]))

    def take(self, rows) -> "Design":
        rows = np.asarray(rows)
        dates = tuple(self.dates[i] for i in rows) if self.dates else ()
        return Design(self.w[rows], self.f[rows], self.y[rows], self.h, dates)

    def with_factors(self, f) -> "Design":
        return Design(self.w, f, self.y, self.h, self.dates)


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 100
    beta_cap: float = 50.0
    max_halvings: int = 30


@dataclass(frozen=True)
class BinaryFarFit:
    """Result of :func:`fit`; ``beta`` is ordered (intercept, w block, f block)."""

    beta: np.ndarray
    loglik: float
    iterations: int
    gradient_norm: float
    link: LinkFunction
    converged: bool
    n: int = 0
    p: int = 0
    d: int = 0
    history: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "beta": [float(b) for b in self.beta],
            "loglik": self.loglik,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "converged": self.converged,
            "link": self.link.kind,
            "n": self.n,
            "p": self.p,
            "d": self.d,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BinaryFarFit":
        return cls(
            beta=np.asarray(data["beta"], dtype=float),
            loglik=float(data["loglik"]),
            iterations=int(data["iterations"]),
            gradient_norm=float(data.get("gradient_norm", 0.0)),
            link=LinkFunction(data["link"]),
            converged=bool(data["converged"]),
            n=int(data.get("n", 0)),
            p=int(data.get("p", 0)),
            d=int(data.get("d", 0)),
        )


def _check_beta(beta, design: Design) -> np.ndarray:
    beta = np.ascontiguousarray(beta, dtype=np.float64).ravel()
    if beta.shape[0] != design.k:
        raise InvalidArgumentError(
            f"beta has length {beta.shape[0]}, design needs 1 + p + d = {design.k}"
        )
    return beta


def log_likelihood(beta, design: Design, link: LinkFunction | str = PROBIT) -> float:
    """Bernoulli log-likelihood of ``design`` at ``beta``.

    Link probabilities are clamped to [1e-12, 1 - 1e-12] before taking logs.
    """
    link = get_link(link)
    beta = _check_beta(beta, design)
    ll, _, _ = _kernels.glm_terms(design.z, design.y, beta, link.code, False)
    return ll


def score_and_hessian(beta, design: Design, link: LinkFunction | str = PROBIT):
    """Analytic gradient and Hessian of :func:`log_likelihood` with respect to beta."""
    link = get_link(link)
    beta = _check_beta(beta, design)
    _, grad, hess = _kernels.glm_terms(design.z, design.y, beta, link.code, True)
    return grad, hess


def _newton_step(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    neg = -hess
    try:
        chol = np.linalg.cholesky(neg)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(neg + RIDGE * np.eye(neg.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError("Hessian is singular even after ridge adjustment") from exc
    step = np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
    if not np.all(np.isfinite(step)):
        raise SingularDesignError("Newton step is not finite")
    return step


def fit(design: Design, link: LinkFunction | str = PROBIT, opts: FitOptions | None = None) -> BinaryFarFit:
    """Maximise the binary log-likelihood by Newton's method with step halving.

    Iteration starts at beta = 0 and stops once the max-norm of the gradient falls
    below ``opts.tol``. Hitting ``opts.max_iter`` or exhausting the step halvings
    returns a fit with ``converged=False`` instead of raising.

    Raises
    ------
    DegenerateOutcomeError
        If y is constant.
    SingularDesignError
        If the design does not have full column rank.
    SeparationError
        If the coefficients diverge past ``opts.beta_cap`` while the likelihood
        keeps improving, the signature of (quasi-)complete separation.
    """
    link = get_link(link)
    opts = opts or FitOptions()
    y = design.y
    if y.min() == y.max():
        raise DegenerateOutcomeError(f"outcome is constant (all {int(y[0])}); the MLE does not exist")
    z = design.z
    if not np.all(np.isfinite(z)):
        raise InvalidArgumentError("design contains non-finite values")
    n, k = z.shape
    if n <= k:
        raise InvalidArgumentError(f"need more observations ({n}) than coefficients ({k})")
    if np.linalg.matrix_rank(z) < k:
        raise SingularDesignError(f"design matrix has rank below {k}")

    code = link.code
    beta = np.zeros(k)
    ll, grad, hess = _kernels.glm_terms(z, y, beta, code, True)
    history = [ll]
    converged = False
    it = 0
    # slack for roundoff in the likelihood sum once the optimum is reached
    slack = 64.0 * np.finfo(float).eps
    while True:
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < opts.tol:
            converged = True
            break
        if it >= opts.max_iter:
            break
        step = _newton_step(grad, hess)
        t = 1.0
        accepted = False
        for _ in range(opts.max_halvings + 1):
            cand = beta + t * step
            ll_new, g_new, h_new = _kernels.glm_terms(z, y, cand, code, True)
            if ll_new >= ll:
                accepted = True
            elif ll_new >= ll - slack * abs(ll) and np.max(np.abs(g_new)) < gnorm:
                accepted = True
            if accepted:
                break
            t *= 0.5
        if not accepted:
            log.debug("step halving exhausted at iteration %d (|g|=%.3g)", it, gnorm)
            break
        gain = (ll_new - ll) / max(abs(ll), np.finfo(float).tiny)
        beta, ll, grad, hess = cand, ll_new, g_new, h_new
        history.append(ll)
        it += 1
        if np.max(np.abs(beta)) > opts.beta_cap and gain > 1e-10:
            raise SeparationError(
                f"|beta| exceeded {opts.beta_cap:g} with the likelihood still rising; "
                "the outcome is (quasi-)separated by the regressors"
            )

    gnorm = float(np.max(np.abs(grad)))
    if np.max(np.abs(beta)) > opts.beta_cap and ll > -n * 1e-9:
        # every probability sits on the clamp: the likelihood is flat only because of clamping
        raise SeparationError(f"fitted probabilities saturate with |beta| > {opts.beta_cap:g}")
    return BinaryFarFit(
        beta=beta,
        loglik=ll,
        iterations=it,
        gradient_norm=gnorm,
        link=link,
        converged=converged,
        n=n,
        p=design.p,
        d=design.d,
        history=tuple(history),
    )


def linear_index(fit_: BinaryFarFit, design: Design) -> np.ndarray:
    return design.z @ _check_beta(fit_.beta, design)


def fitted_probabilities(fit_: BinaryFarFit, design: Design) -> np.ndarray:
    """Phi(beta' z_t) for every row of ``design``, clamped to (1e-12, 1 - 1e-12)."""
    p = fit_.link.cdf(linear_index(fit_, design))
    return np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


def predict_proba(fit_: BinaryFarFit, w_new=None, f_new=None) -> float:
    w_new = np.atleast_1d(np.asarray([] if w_new is None else w_new, dtype=np.float64)).ravel()
    f_new = np.atleast_1d(np.asarray([] if f_new is None else f_new, dtype=np.float64)).ravel()
    z = np.concatenate([[1.0], w_new, f_new])
    if z.shape[0] != fit_.beta.shape[0] or (fit_.n and (w_new.size != fit_.p or f_new.size != fit_.d)):
        raise InvalidArgumentError(
            f"expected {fit_.p} observed and {fit_.d} factor regressors, "
            f"got {w_new.size} and {f_new.size}"
        )
    p = float(fit_.link.cdf(float(z @ fit_.beta)))
    return min(max(p, PROB_FLOOR), 1.0 - PROB_FLOOR)


def intercept_only_loglik(y) -> float:
    """Maximised log-likelihood of the constant-probability model (link-free)."""
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    m = y.sum()
    if m == 0 or m == n:
        return 0.0
    pbar = m / n
    return float(m * np.log(pbar) + (n - m) * np.log1p(-pbar))
