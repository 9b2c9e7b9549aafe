"""Time the numba kernels against their numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat 20]

Both backends are importable side by side, so one process compares them
directly. The end-to-end rows run a fresh interpreter per backend with
BINFAR_DISABLE_NUMBA set accordingly.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from binfar import _kernels as k

END_TO_END = (
    "from binfar.simulate import preset, run_study;"
    "import time;t=time.perf_counter();"
    "run_study([preset(1,1,100,200,1)],50);"
    "print(time.perf_counter()-t)"
)


def _best(fn, repeat: int) -> float:
    fn()  # warm-up (and JIT compile)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not k.HAVE_NUMBA:
        sys.exit("numba is not installed")

    rng = np.random.default_rng(0)
    n, p = 2000, 5
    z = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    beta = rng.standard_normal(p) * 0.3
    y = (z @ beta + rng.standard_normal(n) > 0).astype(np.float64)
    scores = np.sort(np.round(rng.random(100_000), 3))[::-1].copy()
    labels = (rng.random(scores.size) < 0.3).astype(np.int64)
    innov = rng.standard_normal(100_000)

    cases = [
        ("glm_terms probit n=2000", lambda f: f(z, y, beta, k.PROBIT, True),
         k.glm_terms_numpy, k.glm_terms_numba),
        ("glm_terms logistic n=2000", lambda f: f(z, y, beta, k.LOGISTIC, True),
         k.glm_terms_numpy, k.glm_terms_numba),
        ("auc_counts n=100000", lambda f: f(scores, labels), k.auc_counts_numpy, k.auc_counts_numba),
        ("ar1 n=100000", lambda f: f(innov, 0.8, 0.0, 0.6), k.ar1_numpy, k.ar1_numba),
    ]
    print(f"{'kernel':30s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, call, f_np, f_nb in cases:
        t_np = _best(lambda: call(f_np), args.repeat) * 1e3
        t_nb = _best(lambda: call(f_nb), args.repeat) * 1e3
        print(f"{name:30s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.1f}")

    print("\nend to end: 50 replications, N=100, T=200 (seconds, includes JIT warm-up)")
    for label, flag in (("numpy", "1"), ("numba", "0")):
        env = {**os.environ, "BINFAR_DISABLE_NUMBA": flag}
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        print(f"  {label:6s} {float(out.stdout):.2f}")


if __name__ == "__main__":
    main()
