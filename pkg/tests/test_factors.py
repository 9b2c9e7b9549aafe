import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from binfar.errors import DegenerateSpectrumWarning, InvalidArgumentError, SingularRotationError
from binfar.factors import (
    FactorEstimate,
    PanelMatrix,
    estimate_factors,
    ic_values,
    rotation_matrix,
    select_num_factors,
)
from binfar.simulate import generate, preset
from oracles import jacobi_eigh


def _panel(rng, t, n, d, noise=1.0):
    f = rng.standard_normal((t, d))
    lam = rng.standard_normal((n, d))
    return f @ lam.T + noise * rng.standard_normal((t, n)), f, lam


def test_rank_one_exact_fit(rng):
    f = rng.standard_normal((50, 1))
    lam = rng.standard_normal((20, 1))
    x = f @ lam.T
    est = estimate_factors(x, 1)
    resid = x - est.common_component()
    assert np.sum(resid**2) < 1e-10


def test_four_by_three_against_jacobi_oracle():
    x = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]], dtype=float)
    est = estimate_factors(x, 1)
    vals, vecs = jacobi_eigh(x @ x.T / 12.0)
    top = vecs[:, 0]
    loading_sum = (x.T @ top).sum()
    top = top if loading_sum >= 0 else -top
    np.testing.assert_allclose(est.factors[:, 0], 2.0 * top, atol=1e-12)
    np.testing.assert_allclose(est.eigenvalues[0], vals[0], rtol=1e-12)
    np.testing.assert_allclose(est.total_variance, vals.sum(), rtol=1e-12)


@pytest.mark.parametrize("shape", [(40, 90), (90, 40), (60, 60)])
def test_orthonormality_and_projection(rng, shape):
    t, n = shape
    x, _, _ = _panel(rng, t, n, 3)
    est = estimate_factors(x, 3)
    gram = est.factors.T @ est.factors / t
    assert np.max(np.abs(gram - np.eye(3))) < 1e-8
    np.testing.assert_allclose(est.loadings, x.T @ est.factors / t, rtol=1e-12)
    lhs = x @ x.T @ est.factors / (n * t)
    np.testing.assert_allclose(lhs, est.factors * est.eigenvalues, rtol=1e-6, atol=1e-10)
    assert np.all(np.diff(est.eigenvalues) < 0) and np.all(est.eigenvalues >= 0)
    assert np.all(est.loadings.sum(axis=0) >= 0)


@pytest.mark.parametrize("shape", [(30, 80), (80, 30)])
def test_time_and_cross_routes_agree(rng, shape):
    x, _, _ = _panel(rng, *shape, 2)
    a = estimate_factors(x, 2, route="time")
    b = estimate_factors(x, 2, route="cross")
    np.testing.assert_allclose(a.factors, b.factors, atol=1e-8)
    np.testing.assert_allclose(a.loadings, b.loadings, atol=1e-8)


def test_rank_deficient_cross_route_falls_back(rng):
    f = rng.standard_normal((80, 1))
    x = f @ rng.standard_normal((1, 30))
    est = estimate_factors(x, 2, route="cross")
    assert np.all(np.isfinite(est.factors))


def test_sign_rule_zero_sum_uses_first_nonzero():
    # the top loading column sums to exactly zero, so the first nonzero entry decides
    x = np.array([[1.0, -1.0], [2.0, -2.0], [-1.0, 1.0], [3.0, -3.0]])
    est = estimate_factors(x, 1)
    col = est.loadings[:, 0]
    assert col.sum() == pytest.approx(0.0, abs=1e-14)
    assert col[np.flatnonzero(np.abs(col) > 0)[0]] > 0


def test_determinism(rng):
    x, _, _ = _panel(rng, 70, 50, 2)
    a = estimate_factors(x, 2)
    b = estimate_factors(x.copy(), 2)
    assert np.array_equal(a.factors, b.factors) and np.array_equal(a.loadings, b.loadings)


@given(c=st.floats(0.01, 100.0))
def test_scale_equivariance(c):
    rng = np.random.default_rng(3)
    x, _, _ = _panel(rng, 40, 30, 2)
    a = estimate_factors(x, 2)
    b = estimate_factors(c * x, 2)
    np.testing.assert_allclose(b.factors, a.factors, atol=1e-7)
    np.testing.assert_allclose(b.loadings, c * a.loadings, rtol=1e-7, atol=1e-9)


@given(arrays(np.float64, (12, 7), elements=st.floats(-1e3, 1e3)))
def test_normalisation_property(x):
    if np.linalg.matrix_rank(x) < 2:
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSpectrumWarning)
        est = estimate_factors(x, 2)
    assert np.max(np.abs(est.factors.T @ est.factors / 12 - np.eye(2))) < 1e-8


def test_degenerate_spectrum_warns():
    x = np.eye(6)
    with pytest.warns(DegenerateSpectrumWarning):
        est = estimate_factors(x, 2)
    assert est.degenerate


def test_invalid_inputs():
    x = np.ones((5, 4))
    with pytest.raises(InvalidArgumentError):
        estimate_factors(x, 0)
    with pytest.raises(InvalidArgumentError):
        estimate_factors(x, 5)
    bad = x.copy()
    bad[1, 1] = np.nan
    with pytest.raises(InvalidArgumentError):
        estimate_factors(bad, 1)
    with pytest.raises(InvalidArgumentError):
        estimate_factors(np.ones((1, 4)), 1)


def test_serialisation_round_trip(rng):
    x, _, _ = _panel(rng, 30, 20, 2)
    est = estimate_factors(x, 2)
    back = FactorEstimate.from_dict(est.to_dict())
    assert np.array_equal(back.factors, est.factors)
    assert back.d == 2 and back.total_variance == est.total_variance


def test_panel_matrix_is_read_only():
    p = PanelMatrix(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        p.values[0, 0] = 1.0
    assert p.series_ids == ("x1", "x2")


def test_rotation_self_matches_direct_products(rng):
    x, _, _ = _panel(rng, 100, 50, 2)
    est = estimate_factors(x, 2)
    h = rotation_matrix(est, est.factors, est.loadings)
    lam = est.loadings
    direct = (lam.T @ lam / 50) @ np.eye(2) @ np.linalg.inv(np.diag(est.eigenvalues))
    np.testing.assert_allclose(h, direct, atol=1e-12)


def test_rotation_scalar_case(rng):
    x, f, lam = _panel(rng, 60, 40, 1)
    est = estimate_factors(x, 1)
    a = float(lam[:, 0] @ lam[:, 0] / 40)
    b = float(f[:, 0] @ est.factors[:, 0] / 60)
    v = float(est.eigenvalues[0])
    assert rotation_matrix(est, f, lam)[0, 0] == pytest.approx(a * b / v, rel=1e-12)


def test_rotation_bounded_on_dgp1_draw():
    draw = generate(preset(1, 1, 300, 400, 12345))
    est = estimate_factors(draw.panel, 2)
    h = rotation_matrix(est, draw.f_true, draw.loadings_true)
    assert np.all(np.isfinite(h)) and np.linalg.norm(h) < 10


def test_rotation_singular():
    est = FactorEstimate(np.ones((4, 1)), np.ones((3, 1)), np.array([0.0]), 1.0)
    with pytest.raises(SingularRotationError):
        rotation_matrix(est, np.ones((4, 1)), np.ones((3, 1)))


def test_ic_noiseless_rank_two(rng):
    f = rng.standard_normal((100, 2))
    x = f @ rng.standard_normal((2, 60))
    d_hat, ic = select_num_factors(x, 10)
    assert d_hat == 2
    assert np.all(np.diff(ic[2:]) > 0)


def test_ic_formula(rng):
    x, _, _ = _panel(rng, 50, 30, 2)
    ic = ic_values(x, 4)
    c = 50 * 30 / 80
    assert ic[0] == pytest.approx(np.log(np.mean(x**2)), rel=1e-12)
    for d in range(1, 5):
        est = estimate_factors(x, d)
        ssr = np.mean((x - est.common_component()) ** 2)
        assert ic[d] == pytest.approx(np.log(ssr) + d * np.log(c) / c, rel=1e-10)


def test_ic_bad_dmax(rng):
    with pytest.raises(InvalidArgumentError):
        ic_values(rng.standard_normal((10, 5)), 5)
