"""Inner loops shared by the estimators.

Every kernel has a pure-numpy implementation and a numba ``@njit`` twin with the
same signature. The numba path is used when numba imports cleanly and the
environment variable ``BINFAR_DISABLE_NUMBA`` is unset (or ``0``/``false``).
Both paths are kept importable so tests and ``benchmarks/bench_kernels.py`` can
compare them directly.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy import special

PROBIT = 0
LOGISTIC = 1

# the unit-variance logistic uses F(x) = 1 / (1 + exp(-x * pi / sqrt(3)))
LOGISTIC_SCALE = math.pi / math.sqrt(3.0)
PROB_FLOOR = 1e-12

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_INV_SQRT_2 = 1.0 / math.sqrt(2.0)


def _env_disabled() -> bool:
    flag = os.environ.get("BINFAR_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("", "0", "false", "no")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_disabled()


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def link_eval_numpy(u: np.ndarray, kind: int):
    """Return (cdf, 1 - cdf, pdf, pdf') evaluated at ``u``.

    The complement is computed directly rather than as ``1 - cdf`` so the upper
    tail keeps full relative precision.
    """
    u = np.asarray(u, dtype=np.float64)
    if kind == PROBIT:
        cdf = special.ndtr(u)
        sf = special.ndtr(-u)
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * u * u)
        dpdf = -u * pdf
    else:
        su = LOGISTIC_SCALE * u
        cdf = special.expit(su)
        sf = special.expit(-su)
        pdf = LOGISTIC_SCALE * cdf * sf
        dpdf = LOGISTIC_SCALE * pdf * (sf - cdf)
    return cdf, sf, pdf, dpdf


def glm_terms_numpy(z, y, beta, kind, derivs=True):
    u = z @ beta
    cdf, sf, pdf, dpdf = link_eval_numpy(u, kind)
    p = np.clip(cdf, PROB_FLOOR, 1.0 - PROB_FLOOR)
    q = np.clip(sf, PROB_FLOOR, 1.0 - PROB_FLOOR)
    yc = 1.0 - y
    ll = float(np.sum(y * np.log(p) + yc * np.log(q)))
    k = z.shape[1]
    if not derivs:
        return ll, np.zeros(k), np.zeros((k, k))
    # a term whose probability sits on the clamp is constant, so it has no slope
    on1 = (cdf >= PROB_FLOOR) & (cdf <= 1.0 - PROB_FLOOR)
    on0 = (sf >= PROB_FLOOR) & (sf <= 1.0 - PROB_FLOOR)
    w1 = np.where(on1, y, 0.0)
    w0 = np.where(on0, yc, 0.0)
    r1 = pdf / p
    r0 = pdf / q
    d1 = w1 * r1 - w0 * r0
    d2 = w1 * (dpdf / p - r1 * r1) - w0 * (dpdf / q + r0 * r0)
    grad = z.T @ d1
    hess = (z * d2[:, None]).T @ z
    return ll, grad, hess


def auc_counts_numpy(scores_desc, labels):
    """Cumulative (true, false) positive counts at each distinct threshold.

    ``scores_desc`` must be sorted in descending order and ``labels`` permuted
    accordingly; one entry is returned per tie group.
    """
    n = scores_desc.shape[0]
    ends = np.append(np.flatnonzero(np.diff(scores_desc) != 0.0), n - 1)
    pos = np.cumsum(labels.astype(np.int64))[ends]
    neg = (ends + 1) - pos
    return pos, neg


def ar1_numpy(innov, rho, init, scale):
    out = np.empty_like(innov, dtype=np.float64)
    prev = init
    for t in range(innov.shape[0]):
        prev = rho * prev + scale * innov[t]
        out[t] = prev
    return out


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _link_point(u, kind):
        if kind == PROBIT:
            cdf = 0.5 * math.erfc(-u * _INV_SQRT_2)
            sf = 0.5 * math.erfc(u * _INV_SQRT_2)
            pdf = _INV_SQRT_2PI * math.exp(-0.5 * u * u)
            dpdf = -u * pdf
        else:
            su = LOGISTIC_SCALE * u
            if su >= 0.0:
                e = math.exp(-su)
                cdf = 1.0 / (1.0 + e)
                sf = e / (1.0 + e)
            else:
                e = math.exp(su)
                cdf = e / (1.0 + e)
                sf = 1.0 / (1.0 + e)
            pdf = LOGISTIC_SCALE * cdf * sf
            dpdf = LOGISTIC_SCALE * pdf * (sf - cdf)
        return cdf, sf, pdf, dpdf

    @numba.njit(cache=True, nogil=True)
    def glm_terms_numba(z, y, beta, kind, derivs=True):
        n, k = z.shape
        grad = np.zeros(k)
        hess = np.zeros((k, k))
        ll = 0.0
        for t in range(n):
            u = 0.0
            for j in range(k):
                u += z[t, j] * beta[j]
            cdf, sf, pdf, dpdf = _link_point(u, kind)
            p = min(max(cdf, PROB_FLOOR), 1.0 - PROB_FLOOR)
            q = min(max(sf, PROB_FLOOR), 1.0 - PROB_FLOOR)
            yt = y[t]
            ll += yt * math.log(p) + (1.0 - yt) * math.log(q)
            if derivs:
                w1 = yt if PROB_FLOOR <= cdf <= 1.0 - PROB_FLOOR else 0.0
                w0 = (1.0 - yt) if PROB_FLOOR <= sf <= 1.0 - PROB_FLOOR else 0.0
                r1 = pdf / p
                r0 = pdf / q
                d1 = w1 * r1 - w0 * r0
                d2 = w1 * (dpdf / p - r1 * r1) - w0 * (dpdf / q + r0 * r0)
                for a in range(k):
                    za = z[t, a]
                    grad[a] += d1 * za
                    for b in range(a, k):
                        hess[a, b] += d2 * za * z[t, b]
        for a in range(k):
            for b in range(a):
                hess[a, b] = hess[b, a]
        return ll, grad, hess

    @numba.njit(cache=True, nogil=True)
    def auc_counts_numba(scores_desc, labels):
        n = scores_desc.shape[0]
        pos = np.empty(n, dtype=np.int64)
        neg = np.empty(n, dtype=np.int64)
        groups = 0
        tp = 0
        fp = 0
        for i in range(n):
            if labels[i] != 0:
                tp += 1
            else:
                fp += 1
            if i == n - 1 or scores_desc[i + 1] != scores_desc[i]:
                pos[groups] = tp
                neg[groups] = fp
                groups += 1
        return pos[:groups], neg[:groups]

    @numba.njit(cache=True, nogil=True)
    def ar1_numba(innov, rho, init, scale):
        out = np.empty(innov.shape[0])
        prev = init
        for t in range(innov.shape[0]):
            prev = rho * prev + scale * innov[t]
            out[t] = prev
        return out

else:  # pragma: no cover
    glm_terms_numba = auc_counts_numba = ar1_numba = None


if USE_NUMBA:
    glm_terms = glm_terms_numba
    auc_counts = auc_counts_numba
    ar1 = ar1_numba
else:
    glm_terms = glm_terms_numpy
    auc_counts = auc_counts_numpy
    ar1 = ar1_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
