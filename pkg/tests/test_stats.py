import math

import numpy as np
import pytest

from fragscope.errors import PreconditionError
from fragscope.parallel import chunks, fan_out
from fragscope.stats import MCEstimate, fit_replicas, loglog_fit, merge_moments, moments, two_sample_z


def test_moments_roundtrip():
    x = np.random.default_rng(0).normal(2.0, 3.0, 10_001)
    a = MCEstimate.from_samples(x)
    b = MCEstimate.from_moments(*merge_moments([moments(x[:5000]), moments(x[5000:])]))
    assert a.mean == pytest.approx(b.mean, rel=1e-12)
    assert a.stderr == pytest.approx(b.stderr, rel=1e-9)
    assert MCEstimate.bernoulli(30, 100).mean == 0.3


def test_zscores():
    assert two_sample_z(MCEstimate(1.0, 0.0, 10), MCEstimate(1.0, 0.0, 10)) == 0.0
    assert math.isinf(two_sample_z(MCEstimate(2.0, 0.0, 10), MCEstimate(1.0, 0.0, 10)))
    assert two_sample_z(MCEstimate(1.0, 0.3, 10), MCEstimate(0.0, 0.4, 10)) == pytest.approx(2.0)


def test_regression_recovers_coefficients():
    grid = np.arange(10, 61, 5.0)
    rng = np.random.default_rng(1)
    y = 0.2 * grid + 0.6 * np.log(grid) + 1.0 + rng.normal(0, 0.01, (50, grid.size))
    fit = fit_replicas(grid, y)
    assert fit.coef_t == pytest.approx(0.2, abs=1e-3)
    assert fit.coef_logt == pytest.approx(0.6, abs=0.05)
    lin = fit_replicas(grid, 0.3 * grid + 2.0 + 0 * y, with_logt=False)
    assert lin.coef_t == pytest.approx(0.3) and lin.coef_logt == 0.0
    with pytest.raises(PreconditionError):
        fit_replicas([1, 2, 3], y[:, :3])


def test_loglog():
    grid = [4, 8, 16, 32, 64]
    fit = loglog_fit(grid, [MCEstimate(3 * t ** -0.5, 0.0, 1) for t in grid])
    assert fit.slope == pytest.approx(-0.5)
    with pytest.raises(PreconditionError):
        loglog_fit(grid[:4], [MCEstimate(1, 0, 1)] * 4)


def _square(x):
    return x * x


def test_fan_out_order():
    assert fan_out(_square, [(i,) for i in range(7)], workers=3) == [i * i for i in range(7)]
    assert chunks(25, 10) == [(0, 0, 10), (1, 10, 10), (2, 20, 5)]
