import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fragscope.errors import DegenerateTruncation, InvalidModel
from fragscope.model import (
    DislocationModel,
    PartitionSample,
    make_policy,
    model_from_spec,
    sample_partition,
    split_points,
    truncated_rate,
)

BU = DislocationModel.binary_uniform()
TER = DislocationModel.ternary()
PL = DislocationModel.binary_powerlaw(1.5)


def test_partition_invariants():
    PartitionSample((0.5, 0.5))
    with pytest.raises(InvalidModel):
        PartitionSample((1.0,))
    with pytest.raises(InvalidModel):
        PartitionSample((0.6, 0.5))
    with pytest.raises(InvalidModel):
        PartitionSample((1.0, 0.0))


def test_builtin_samples():
    rng = np.random.default_rng(1)
    for _ in range(200):
        s = sample_partition(BU, make_policy(BU, 0.01), rng).sizes
        assert len(s) == 2 and abs(math.fsum(s) - 1.0) <= 1e-12
        assert s[0] >= s[1]
    assert sample_partition(TER, make_policy(TER), rng).sizes == (1 / 3, 1 / 3, 1 / 3)


def test_powerlaw_cdf():
    # exact truncated CDF of the split point: (eps^-1/2 - x^-1/2) / (eps^-1/2 - (1-eps)^-1/2)
    eps = 0.01
    pol = make_policy(PL, eps)
    s = split_points(PL, pol, 100_000, np.random.default_rng(2))
    assert s.min() > eps and s.max() < 1 - eps

    def cdf(x):
        return (eps ** -0.5 - np.asarray(x) ** -0.5) / (eps ** -0.5 - (1 - eps) ** -0.5)

    assert cdf(0.25) == pytest.approx(8 / (10 - 0.99 ** -0.5), rel=1e-12)
    assert cdf(0.25) == pytest.approx(0.8893867, abs=1e-7)
    assert np.mean(s <= 0.25) == pytest.approx(cdf(0.25), abs=0.005)
    assert stats.kstest(s, cdf).statistic < 0.01


def test_uniform_ks():
    pol = make_policy(BU, 0.1)
    s = split_points(BU, pol, 100_000, np.random.default_rng(3))
    assert stats.kstest(s, stats.uniform(0.1, 0.8).cdf).statistic < 0.01


def test_truncated_rate_examples():
    assert truncated_rate(BU, 0.01) == pytest.approx(0.98, abs=1e-15)
    assert truncated_rate(TER, 0.1) == 1.0
    assert truncated_rate(PL, 0.01) == pytest.approx(2 * (10 - 0.99 ** -0.5), rel=1e-13)
    assert truncated_rate(PL, 0.01) == pytest.approx(17.9899, abs=1e-4)


def test_truncated_rate_properties():
    eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
    for m in (BU, TER, PL):
        rates = [truncated_rate(m, e) for e in eps]
        assert all(a <= b for a, b in zip(rates, rates[1:]))
        for e, r in zip(eps, rates):
            assert r <= m.integrability() / e
    scaled = [e * truncated_rate(PL, e) for e in eps]
    assert max(scaled) < 3.0
    assert truncated_rate(BU, 1e-12) == pytest.approx(BU.total_mass)


def test_truncation_errors():
    with pytest.raises(DegenerateTruncation):
        make_policy(PL, 0.0)
    big = DislocationModel.custom([(1.0, [0.95, 0.05])])
    with pytest.raises(DegenerateTruncation):
        make_policy(big, 0.1)
    with pytest.raises(InvalidModel):
        truncated_rate(BU, 0.5)


def test_custom_and_spec():
    m = DislocationModel.custom([(2.0, [0.5, 0.5]), (1.0, [0.2, 0.3, 0.5])])
    assert m.total_mass == 3.0 and m.max_blocks == 3
    assert m.atoms[1][1] == (0.5, 0.3, 0.2)
    assert truncated_rate(m, 0.49) == 3.0
    with pytest.raises(InvalidModel):
        DislocationModel.custom([(1.0, [0.5, 0.4])])
    with pytest.raises(InvalidModel):
        DislocationModel.custom([(-1.0, [0.5, 0.5])])
    with pytest.raises(InvalidModel):
        DislocationModel.binary_powerlaw(2.0)
    assert model_from_spec("binary-powerlaw:1.5") == PL
    assert model_from_spec("binary-powerlaw(1.5)") == PL
    assert model_from_spec("ternary") == TER
    assert model_from_spec({"kind": "custom-finite", "atoms": [[1, [0.5, 0.5]]]}).is_atomic
    with pytest.raises(InvalidModel):
        model_from_spec("nope")


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eps=st.floats(1e-4, 0.3), which=st.sampled_from(["u", "p", "t"]))
def test_samples_conserve_mass(seed, eps, which):
    m = {"u": BU, "p": PL, "t": TER}[which]
    s = sample_partition(m, make_policy(m, eps), np.random.default_rng(seed)).sizes
    assert abs(math.fsum(s) - 1.0) <= 1e-12
    assert 1.0 - s[0] > eps or which == "t"
