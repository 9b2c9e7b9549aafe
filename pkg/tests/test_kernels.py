import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from binfar import _kernels as k

needs_numba = pytest.mark.skipif(not k.HAVE_NUMBA, reason="numba not installed")


@needs_numba
@pytest.mark.parametrize("kind", [k.PROBIT, k.LOGISTIC])
@pytest.mark.parametrize("scale", [0.3, 3.0, 40.0])
def test_glm_terms_backends_agree(rng, kind, scale):
    # large scales push many terms onto the probability clamp
    z = np.column_stack([np.ones(300), rng.standard_normal((300, 3))])
    beta = scale * rng.standard_normal(4)
    y = (rng.random(300) < 0.4).astype(np.float64)
    a = k.glm_terms_numpy(z, y, beta, kind, True)
    b = k.glm_terms_numba(z, y, beta, kind, True)
    assert a[0] == pytest.approx(b[0], rel=1e-12, abs=1e-9)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-10, atol=1e-9)
    np.testing.assert_allclose(a[2], b[2], rtol=1e-10, atol=1e-9)


@needs_numba
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 1)), min_size=1, max_size=80))
def test_auc_counts_backends_agree(pairs):
    pairs.sort(key=lambda v: -v[0])
    scores = np.array([s for s, _ in pairs], dtype=np.float64)
    labels = np.array([l for _, l in pairs], dtype=np.int64)
    pa, na = k.auc_counts_numpy(scores, labels)
    pb, nb = k.auc_counts_numba(scores, labels)
    assert np.array_equal(pa, pb) and np.array_equal(na, nb)
    assert pa[-1] == labels.sum() and na[-1] == labels.size - labels.sum()


@needs_numba
def test_ar1_backends_bit_identical(rng):
    innov = rng.standard_normal(5000)
    assert np.array_equal(k.ar1_numpy(innov, 0.64, 0.3, 0.768), k.ar1_numba(innov, 0.64, 0.3, 0.768))


def test_hessian_is_negative_semidefinite_on_the_clamp(rng):
    z = np.column_stack([np.ones(200), rng.standard_normal((200, 2))])
    y = (rng.random(200) < 0.5).astype(np.float64)
    for kind in (k.PROBIT, k.LOGISTIC):
        _, _, h = k.glm_terms_numpy(z, y, np.array([0.0, 30.0, -25.0]), kind, True)
        assert np.linalg.eigvalsh(h).max() <= 1e-9


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("true", "numpy")])
def test_env_flag_selects_numpy_backend(flag, expected):
    env = dict(os.environ, BINFAR_DISABLE_NUMBA=flag)
    code = "from binfar import _kernels as k; print(k.backend(), k.glm_terms is k.glm_terms_numpy)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == [expected, "True"]


def test_backends_give_identical_study_tables():
    code = (
        "from binfar.simulate import preset, run_study;"
        "print(run_study([preset(1, 1, 40, 80, 11)], 4).replications_csv())"
    )
    outs = []
    for flag in ("1", "0"):
        env = dict(os.environ, BINFAR_DISABLE_NUMBA=flag)
        outs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                   text=True, check=True).stdout)
    # exact agreement is not promised across backends; the printed tables agree to reporting precision
    a = [line.split(",") for line in outs[0].splitlines()]
    b = [line.split(",") for line in outs[1].splitlines()]
    assert a[0] == b[0] and len(a) == len(b)
    for ra, rb in zip(a[1:], b[1:]):
        for x, y in zip(ra, rb):
            try:
                assert float(x) == pytest.approx(float(y), rel=1e-8, abs=1e-10)
            except ValueError:
                assert x == y
