import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fragscope import fluctuation as fl
from fragscope.errors import PreconditionError
from fragscope.seeding import stream

POI = fl.SpectrallyPositiveLevy.compensated_poisson()
EXP = fl.SpectrallyPositiveLevy.compound_exponential(1.0, 2.0)


def poisson_min_survival(t, u):
    """P(inf_{[0,t]} (N_s - s) >= -u) for a rate-1 Poisson N.

    The path creeps down, so first passage below -u happens at some u + k with
    N_{u+k} = k, and by the ballot theorem with probability u/(u+k) P(N_{u+k} = k).
    Passage exactly at t leaves the infimum at -u, which still counts.
    """
    k = np.arange(0, int(math.ceil(t - u)))
    s = u + k
    return 1.0 - float(np.sum(u / s * stats.poisson.pmf(k, s)))


def test_process_validation():
    with pytest.raises(PreconditionError):
        fl.SpectrallyPositiveLevy("unit", 1.0, 2.0)
    with pytest.raises(PreconditionError):
        fl.SpectrallyPositiveLevy("gauss", 1.0, 1.0)
    assert fl.levy_from_spec("poisson:2") == fl.SpectrallyPositiveLevy.compensated_poisson(2.0)
    assert fl.levy_from_spec("exponential:1,2") == EXP
    assert EXP.drift == 0.5 and EXP.variance_rate == 0.5
    with pytest.raises(PreconditionError):
        fl.levy_from_spec("brownian")


def test_endpoint_law():
    x = fl.sample_endpoint(POI, 16.0, 200_000, np.random.default_rng(0))
    counts = np.bincount((x + 16.0).astype(int), minlength=60)[:60]
    expected = stats.poisson.pmf(np.arange(60), 16.0) * x.size
    keep = expected > 20
    chi2 = float(np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep]))
    assert stats.chi2.sf(chi2, keep.sum() - 1) > 1e-3
    y = fl.sample_endpoint(EXP, 8.0, 200_000, np.random.default_rng(1))
    assert abs(y.mean()) < 4 * math.sqrt(8 * EXP.variance_rate / 200_000)
    assert y.var() == pytest.approx(8 * EXP.variance_rate, rel=0.02)


def test_path_minimum_exact():
    path = fl.simulate_path(POI, 30.0, np.random.default_rng(2))
    dense = path.value(np.linspace(0.0, 30.0, 300_001))
    m = path.minimum()
    assert m <= dense.min() + 1e-12
    assert m >= dense.min() - 30.0 / 300_000 - 1e-12
    assert path.minimum(5.0, 10.0) <= path.value(np.array([5.0, 10.0])).min()
    with pytest.raises(PreconditionError):
        path.minimum(0.0, 31.0)


def test_endpoint_matches_paths():
    rng = stream(9, 0)
    ends = np.array([fl.simulate_path(EXP, 4.0, rng).value(4.0) for _ in range(20_000)])
    ref = fl.sample_endpoint(EXP, 4.0, 20_000, stream(9, 1))
    assert stats.ks_2samp(ends, ref).pvalue > 1e-3


def test_small_ball_exact():
    t, r, h = 16.0, 0.0, 4.0
    est = fl.small_ball(POI, t, r, h, 200_000, np.random.default_rng(3))
    lo, hi = r + t, r + h + t
    exact = (stats.poisson.cdf(hi, t) - stats.poisson.cdf(lo - 1, t)) * math.sqrt(t) / h
    assert abs(est.mean - exact) < 4 * est.stderr
    with pytest.raises(PreconditionError):
        fl.small_ball(POI, t, r, 0.5, 200_000, np.random.default_rng(3))


@pytest.mark.parametrize("t,u", [(4.0, 1.0), (16.0, 1.0), (16.0, 2.5)])
def test_min_tail_exact(t, u):
    est = fl.min_tail(POI, t, u, 200_000, stream(4, int(t)))
    raw = fl.unscale("mintail", t, {"u": u}, est)
    assert abs(raw.mean - poisson_min_survival(t, u)) < 4 * raw.stderr


def test_lattice_boundary_counts():
    # with t - u an integer, paths ending exactly on the barrier survive
    alive, _, end = fl._killed(POI, 50_000, 4.0, -1.0, 4.0, -1.0, stream(4, 99))
    assert np.any(alive & (end == -1.0))


def test_min_tail_slope():
    s = fl.series("mintail", POI, [4, 8, 16, 32, 64], {"u": 1.0}, 100_000, 5)
    assert s.fit.slope == pytest.approx(-0.5, abs=0.1)
    probs = [row[3] for row in s.rows()]
    assert all(a >= b for a, b in zip(probs, probs[1:]))


def test_corridor_monotone_in_levels():
    t = 16.0
    a = fl.corridor(POI, t, 1.0, 1.0, 100_000, stream(6, 0))
    b = fl.corridor(POI, t, 2.0, 3.0, 100_000, stream(6, 0))
    # same stream: the larger corridor contains the smaller one path by path
    assert b.mean >= a.mean
    with pytest.raises(PreconditionError):
        fl.corridor(POI, t, 0.01, 1.0, 100_000, stream(6, 0))
    with pytest.raises(PreconditionError):
        fl.corridor(POI, t, 1.0, -2.0, 100_000, stream(6, 0))


def test_corridor_bound_and_calibration():
    assert fl.corridor_bound(100.0, 1.0, 1.0) == pytest.approx(2 * 9 / 1000)
    assert fl.corridor_bound(1.0, 5.0, 5.0) == 1.0
    grid = [16, 32, 64, 128, 256]
    shape = [fl.corridor_bound(t, 1, 1) * t ** 1.5 for t in grid]
    good = [fl.MCEstimate(0.8 * s, 0.01, 10) for s in shape]
    cal = fl.calibrate_corridor(grid, good, 1, 1, [0, 2, 4])
    assert cal.c_prime == pytest.approx(0.8) and cal.passed
    bad = list(good)
    bad[1] = fl.MCEstimate(2.0 * shape[1], 0.01, 10)
    assert not fl.calibrate_corridor(grid, bad, 1, 1, [0, 2, 4]).passed
    with pytest.raises(PreconditionError):
        fl.calibrate_corridor(grid, good, 1, 1, range(5))


def test_window_bound_and_estimator():
    assert fl.window_bound(100.0, 1.0, 1.0) == pytest.approx(2 * 3 / 1000)
    assert fl.window_bound(4.0, 5.0, 5.0) == pytest.approx(4 / 8)
    # width-1 window on the lattice: X_t in {1, 2} means N_t in {t + 1, t + 2}
    t = 4.0
    est = fl.corridor_window(POI, t, 1.0, 1.0, 200_000, stream(6, 1))
    both = fl.corridor(POI, t, 1.0, 2.0, 200_000, stream(6, 1))
    low = fl.corridor(POI, t, 1.0, 0.0, 200_000, stream(6, 1))
    # same stream, same paths: {1 <= X <= 2} = {X <= 2} minus {X <= 0} on the lattice
    assert est.mean == pytest.approx(both.mean - low.mean, abs=1e-12)
    grid = [16, 32, 64]
    ests = [fl.MCEstimate(0.5 * fl.window_bound(t, 1, 1) * t ** 1.5, 0.01, 10) for t in grid]
    cal = fl.calibrate_corridor(grid, ests, 1, 1, [0, 2], bound="window")
    assert cal.c_prime == pytest.approx(0.5) and cal.passed
    with pytest.raises(PreconditionError):
        fl.calibrate_corridor(grid, ests, 1, 1, [0, 2], bound="other")


def test_liminf_preconditions():
    with pytest.raises(PreconditionError):
        fl.liminf_event(POI, 1.0, 1.0, 0.62, 4.0, 100_000, stream(0, 0))
    with pytest.raises(PreconditionError):
        fl.liminf_event(POI, 4.0, 1.0, 0.62, 4.0, 100_000, stream(0, 0))  # 0.62 log 4 < 1
    with pytest.raises(PreconditionError):
        fl.liminf_event(POI, 16.0, 1.0, 0.62, 4.0, 100, stream(0, 0))
    est = fl.liminf_event(POI, 16.0, 1.0, 0.62, 4.0, 100_000, stream(0, 0))
    assert est.mean > 0


def test_series_deterministic():
    a = fl.series("smallball", POI, [4, 16], {"r": 0.0, "h": 1.0}, 20_000, 8)
    b = fl.series("smallball", POI, [4, 16], {"r": 0.0, "h": 1.0}, 20_000, 8)
    assert [e.mean for e in a.scaled] == [e.mean for e in b.scaled]
    assert a.fit is None
    with pytest.raises(PreconditionError):
        fl.series("nope", POI, [4], {}, 20_000, 8)


def test_summability():
    res = fl.summability_check(1.0, 3, 10 ** 6)
    assert math.isfinite(res.partial_sum)
    assert res.tail_bound < 1e-6


def test_tail_bound_dominates():
    # the certified bound exceeds a long stretch of the actual tail
    for N in (10 ** 4, 10 ** 5):
        n = np.arange(N + 1, 50 * N, dtype=float)
        actual = math.fsum(np.exp(fl.log_terms(1.0, 3, n)).tolist())
        assert actual <= math.exp(fl.summability_tail(1.0, 3, N))


@settings(max_examples=30, deadline=None)
@given(N=st.integers(2_000, 10 ** 7))
def test_tail_bound_monotone(N):
    assert fl.summability_tail(1.0, 3, 2 * N) <= fl.summability_tail(1.0, 3, N)


def test_small_ball_unit_time():
    # t = 1, window [-1, 0]: N_1 in {0, 1} with probability 2/e
    est = fl.small_ball(POI, 1.0, -1.0, 1.0, 1_000_000, stream(11, 0))
    assert abs(est.mean - 2 / math.e) < 4 * est.stderr
    with pytest.raises(PreconditionError):
        fl.small_ball(POI, 0.0, -1.0, 1.0, 1_000_000, stream(11, 0))


def test_min_tail_drift_bound():
    # before time u the drift cannot push the path below -u
    est = fl.min_tail(POI, 2.0, 3.0, 20_000, stream(12, 0))
    assert est.mean == pytest.approx(math.sqrt(2.0) / 4.0, rel=1e-12)
    assert est.stderr == 0.0
    a = fl.min_tail(POI, 16.0, 1.0, 200_000, stream(12, 1))
    b = fl.min_tail(POI, 64.0, 1.0, 200_000, stream(12, 2))
    assert 0.5 < a.mean / b.mean < 2


def test_corridor_slope():
    s = fl.series("corridor", POI, [16, 32, 64, 128, 256], {"f": 1.0, "g": 1.0}, 1_000_000, 13)
    assert s.fit.slope == pytest.approx(-1.5, abs=0.15)
    assert s.ratio < 3


def test_estimators_monotone():
    r = lambda i: stream(14, i)
    assert fl.small_ball(POI, 16, 0, 2, 100_000, r(0)).mean * 2 >= fl.small_ball(POI, 16, 0, 1, 100_000, r(0)).mean
    assert fl.min_tail(POI, 16, 2, 100_000, r(1)).mean * 3 >= fl.min_tail(POI, 16, 1, 100_000, r(1)).mean * 2
    small = fl.liminf_event(POI, 32.0, 1.0, 0.62, 2.0, 200_000, r(2))
    big = fl.liminf_event(POI, 32.0, 1.0, 0.62, 6.0, 200_000, r(2))
    assert big.mean >= small.mean


def test_levy_moments():
    for levy in (POI, EXP):
        x = fl.sample_endpoint(levy, 1.0, 1_000_000, stream(15, 0))
        n = x.size
        assert abs(x.mean()) < 3 * math.sqrt(levy.variance_rate / n)
        m4 = np.mean(x ** 4)
        se_var = math.sqrt((m4 - x.var() ** 2) / n)
        assert abs(x.var() - levy.variance_rate) < 3 * se_var


def test_path_minima_many():
    rng = stream(16, 0)
    dense = np.arange(0.0, 5.0 + 1e-9, 1e-4)
    for _ in range(100):
        p = fl.simulate_path(EXP, 5.0, rng)
        grid_min = p.value(dense).min()
        assert grid_min - p.drift * 1e-4 - 1e-12 <= p.minimum() <= grid_min + 1e-12


def test_partial_sums_within_tail():
    a = fl.summability_check(1.0, 3, 20_000)
    b = fl.summability_check(1.0, 3, 200_000)
    assert 0 <= b.partial_sum - a.partial_sum <= a.tail_bound
    c = fl.summability_check(1.0, 3, 10 ** 6)
    assert c.decreasing_from is not None and c.decreasing_from <= 10 ** 6
    with pytest.raises(PreconditionError):
        fl.summability_check(0.0, 3, 100)
