import numpy as np
import pytest

from binfar.errors import BootstrapFailureError, InvalidArgumentError
from binfar.glm import Design
from binfar.inference import (
    BootstrapSpec,
    block_rows,
    block_starts,
    fit_two_step,
    moving_block_bootstrap,
)
from binfar.simulate import generate, preset


@pytest.fixture(scope="module")
def draw():
    return generate(preset(1, 1, 60, 121, 12345))


def _inputs(draw):
    des = draw.design()
    return Design(des.w, None, des.y, 1), draw.panel.values[: des.n]


def test_spec_derivations():
    s = BootstrapSpec.from_blocks(200, 25)
    assert (s.num_blocks, s.block_length, s.sample_length) == (25, 8, 200)
    s = BootstrapSpec.from_blocks(199, 25)
    assert s.block_length == 7 and s.sample_length <= 199
    s = BootstrapSpec.default(200)
    assert s.block_length == 6 and s.num_blocks == 33
    assert BootstrapSpec.default(125).block_length == 5
    with pytest.raises(InvalidArgumentError):
        BootstrapSpec.from_blocks(10, 11)
    with pytest.raises(InvalidArgumentError):
        BootstrapSpec(1, 1, 0)


def test_block_starts_reproducible_and_in_range():
    spec = BootstrapSpec(10, 7, 2, seed=99)
    a = [block_starts(spec, b) for b in range(2)]
    b = [block_starts(spec, b) for b in range(2)]
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
        assert x.min() >= 0 and x.max() <= 70 - 7


def test_block_rows_are_contiguous():
    rows = block_rows(np.array([3, 0]), 4)
    assert rows.tolist() == [3, 4, 5, 6, 0, 1, 2, 3]


def test_single_full_block_gives_zero_se(draw):
    des, x = _inputs(draw)
    spec = BootstrapSpec(1, des.n, 5, seed=1)
    res = moving_block_bootstrap(des, x, 2, "probit", spec)
    assert np.all(res.standard_errors == 0.0)
    assert np.array_equal(res.draws[0], res.estimate)
    ref = fit_two_step(x, des.w, des.y, 2)
    np.testing.assert_array_equal(res.estimate, ref.beta)


def test_invariants_and_thread_independence(draw):
    des, x = _inputs(draw)
    spec = BootstrapSpec.from_blocks(des.n, 12, 40, seed=5)
    a = moving_block_bootstrap(des, x, 2, "probit", spec, threads=1)
    b = moving_block_bootstrap(des, x, 2, "probit", spec, threads=3)
    assert np.array_equal(a.draws, b.draws) and a.failed_draws == b.failed_draws
    assert np.all(a.standard_errors >= 0) and np.all(a.ci_lower <= a.ci_upper)
    assert a.draws.shape[0] + a.failed_draws == 40
    narrow = moving_block_bootstrap(des, x, 2, "probit", spec, level=0.8)
    assert np.all(narrow.ci_lower >= a.ci_lower) and np.all(narrow.ci_upper <= a.ci_upper)
    assert a.names == ("cons", "w1", "w2", "f1", "f2")
    assert a.to_csv().count("\n") == a.draws.shape[0] + 6


def test_trimming_uses_leading_rows(draw):
    des, x = _inputs(draw)
    spec = BootstrapSpec(1, des.n - 7, 2, seed=0)
    res = moving_block_bootstrap(des, x, 2, "probit", spec)
    m = des.n - 7
    ref = fit_two_step(x[:m], des.w[:m], des.y[:m], 2)
    np.testing.assert_array_equal(res.estimate, ref.beta)


def test_errors(draw):
    des, x = _inputs(draw)
    with pytest.raises(InvalidArgumentError):
        moving_block_bootstrap(des, x, 2, "probit", BootstrapSpec(1, des.n + 1, 2))
    with pytest.raises(InvalidArgumentError):
        moving_block_bootstrap(des, x, 2, "probit", BootstrapSpec(2, des.n, 2))
    with pytest.raises(InvalidArgumentError):
        moving_block_bootstrap(des, x, 2, "probit", BootstrapSpec(1, des.n, 2), level=1.5)


def test_all_failures_raise(draw, monkeypatch):
    import binfar.inference as inf
    from binfar.errors import SeparationError

    des, x = _inputs(draw)
    real = inf.fit_two_step
    calls = []

    def flaky(*args, **kw):
        calls.append(1)
        if len(calls) == 1:
            return real(*args, **kw)
        raise SeparationError("forced")

    monkeypatch.setattr(inf, "fit_two_step", flaky)
    with pytest.raises(BootstrapFailureError):
        moving_block_bootstrap(des, x, 2, "probit", BootstrapSpec.from_blocks(des.n, 10, 4))


def test_failed_refits_are_counted(draw, monkeypatch):
    import binfar.inference as inf
    from binfar.errors import SeparationError

    des, x = _inputs(draw)
    real = inf.fit_two_step
    calls = []

    def every_other(xs, w, y, d, *a, **kw):
        calls.append(1)
        # the first call is the full-sample estimate; later odd-sum resamples fail
        if len(calls) > 1 and int(round(y.sum())) % 2:
            raise SeparationError("forced")
        return real(xs, w, y, d, *a, **kw)

    monkeypatch.setattr(inf, "fit_two_step", every_other)
    res = moving_block_bootstrap(des, x, 2, "probit", BootstrapSpec.from_blocks(des.n, 10, 30, seed=2))
    assert res.failed_draws > 0 and res.draws.shape[0] == 30 - res.failed_draws
