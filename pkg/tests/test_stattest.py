import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from oracles import ecdf_sup_distance, energy_by_definition
from recordgrid.rand import RandomStream
from recordgrid.stattest import (TestReport, binomial_upper, energy_statistic, ks_one_sample,
                                 ks_statistic, ks_two_sample, moment_check, permutation_test,
                                 power_threshold, random_directions, run_replicates,
                                 sphere_abs_mean, summarize, tame)

samples = st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=25)


def test_tame_values_and_domain():
    assert tame(0.0) == 0.0 and tame(1.0) == 0.5
    assert tame(np.array([3.0]))[0] == 0.75
    for bad in (-1.0, np.inf, np.nan):
        with pytest.raises(ValueError):
            tame(bad)


def test_ks_examples():
    assert ks_statistic([1, 2, 3], [1, 2, 3]) == 0.0
    assert ks_statistic([0.1, 0.2], [0.8, 0.9]) == 1.0
    assert ks_statistic([1, 2, 3], [1.5, 2.5]) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        ks_two_sample([], [1.0])


@given(samples, samples)
def test_ks_matches_ecdf_oracle(a, b):
    assert ks_statistic(a, b) == pytest.approx(ecdf_sup_distance(a, b), abs=1e-12)


def test_ks_p_value_agrees_with_scipy_asymptotics():
    s = RandomStream(1)
    a, b = s.uniforms(4000), s.uniforms(3000) * 1.02
    d, p = ks_two_sample(a, b)
    ref = stats.ks_2samp(a, b, method="asymp")
    assert d == pytest.approx(ref.statistic)
    assert p == pytest.approx(ref.pvalue, rel=0.1, abs=1e-3)


def test_ks_one_sample_agrees_with_scipy():
    x = RandomStream(2).exponentials(5000)
    d, p = ks_one_sample(x, lambda z: -np.expm1(-z))
    ref = stats.kstest(x, "expon")
    assert d == pytest.approx(ref.statistic, abs=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=0.1, abs=1e-3)


def test_energy_examples():
    assert energy_statistic([0.0], [1.0]) == 2.0
    assert energy_statistic([0.0, 0.0], [1.0, 1.0]) == 2.0
    a = RandomStream(3).uniforms((40, 3))
    assert energy_statistic(a, a[::-1]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        energy_statistic(np.zeros((3, 2)), np.zeros((3, 3)))


@given(samples, samples)
def test_energy_1d_matches_definition(a, b):
    assert energy_statistic(a, b) == pytest.approx(energy_by_definition(a, b), abs=1e-8)


@given(st.integers(2, 4), st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32))
def test_energy_multivariate_matches_definition_and_is_nonnegative(d, n, m, seed):
    s = RandomStream(seed, "energy")
    a, b = s.uniforms((n, d)), s.uniforms((m, d)) * 2
    e = energy_statistic(a, b)
    assert e >= 0
    assert e == pytest.approx(max(energy_by_definition(a, b), 0.0), abs=1e-9)


def test_sliced_energy_approximates_exact():
    s = RandomStream(4)
    a, b = s.uniforms((600, 3)), s.uniforms((600, 3)) + 0.3
    exact = energy_statistic(a, b, method="exact")
    sliced = energy_statistic(a, b, method="sliced", directions=random_directions(s, 3, 2000))
    assert sliced == pytest.approx(exact, rel=0.05)


def test_sphere_abs_mean_by_monte_carlo():
    th = random_directions(RandomStream(5), 4, 200_000)
    assert np.allclose(np.linalg.norm(th, axis=1), 1.0)
    assert np.abs(th[:, 0]).mean() == pytest.approx(sphere_abs_mean(4), abs=0.003)
    assert sphere_abs_mean(1) == pytest.approx(1.0)
    assert sphere_abs_mean(2) == pytest.approx(2 / math.pi)


def test_permutation_requires_enough_permutations():
    with pytest.raises(ValueError):
        permutation_test([1.0, 2.0], [3.0], B=18, stream=RandomStream(6))


def test_permutation_p_value_is_one_for_identical_samples():
    a = np.arange(10.0)
    r = permutation_test(a, a.copy(), B=99, stream=RandomStream(7))
    assert r.statistic == pytest.approx(0.0, abs=1e-12) and r.p_value == 1.0
    r = permutation_test(a, a.copy(), statistic="ks", B=99, stream=RandomStream(7))
    assert r.p_value == 1.0


def test_permutation_p_value_range_and_resolution():
    s = RandomStream(8)
    r = permutation_test(s.uniforms(50), s.uniforms(50) + 5, B=199, stream=s)
    assert r.p_value == 1 / 200 and r.reject


@pytest.mark.parametrize("statistic,dim", [("energy", 1), ("ks", 1), ("energy", 3)])
def test_permutation_calibration(statistic, dim):
    s = RandomStream(9, statistic, dim)
    rejections = 0
    for i in range(200):
        rs = s.spawn("rep", i)
        a, b = rs.uniforms((60, dim)), rs.uniforms((60, dim))
        if dim == 1:
            a, b = a[:, 0], b[:, 0]
        rejections += permutation_test(a, b, statistic=statistic, B=199, stream=rs).reject
    assert 0.02 <= rejections / 200 <= 0.09


def test_permutation_calibration_with_sliced_energy():
    s = RandomStream(10, "sliced")
    rejections = 0
    for i in range(200):
        rs = s.spawn("rep", i)
        a, b = rs.exponentials((2500, 2)), rs.exponentials((2500, 2))
        rejections += permutation_test(a, b, B=19, stream=rs, transform="tame").reject
    assert rejections / 200 <= 0.09


def test_permutation_power_on_shifted_uniforms():
    s = RandomStream(11, "power")
    hits = 0
    for i in range(100):
        rs = s.spawn("rep", i)
        hits += permutation_test(rs.uniforms(1000), rs.uniforms(1000) + 0.5, B=199, stream=rs).reject
    assert hits >= 95


def test_permutation_is_deterministic():
    s = RandomStream(12)
    a, b = s.uniforms((300, 2)), s.uniforms((300, 2))
    r1 = permutation_test(a, b, stream=RandomStream(1, "p"))
    r2 = permutation_test(a, b, stream=RandomStream(1, "p"))
    assert r1 == r2


def test_moment_check_examples():
    c = moment_check(np.full(10, 2.5), 2.5)
    assert c.passed and c.ci_low == c.ci_high == 2.5
    assert not moment_check(np.full(10, 2.5), 2.6).passed
    x = RandomStream(13).exponentials(10**5)
    assert moment_check(x, 1.0).passed
    with pytest.raises(ValueError):
        moment_check([], 0.0)


def test_binomial_bounds():
    assert binomial_upper(20, 0.05) == 4
    assert stats.binom.cdf(4, 20, 0.05) >= 0.99 > stats.binom.cdf(3, 20, 0.05)
    assert power_threshold(20) == 18


def _report(p):
    return TestReport("x", 0.0, p, 199, 10, 0.05, p <= 0.05, "none", "energy")


def test_summarize_null_and_reject():
    reports = [_report(0.01)] * 4 + [_report(0.5)] * 16
    assert summarize("x", reports, 0.05).passed
    assert not summarize("x", reports + [_report(0.01)], 0.05).passed
    strong = [_report(0.005)] * 18 + [_report(0.3)] * 2
    assert summarize("x", strong, 0.05, expected="reject").passed
    assert not summarize("x", strong[1:] + [_report(0.3)], 0.05, expected="reject").passed
    single = summarize("x", [_report(0.2)], 0.05)
    assert single.K == 1 and single.rejections == 0


def test_run_replicates_uses_independent_streams():
    def make(rs):
        return rs.uniforms(200), rs.uniforms(200)

    s = run_replicates(make, K=20, B=99, alpha=0.05, stream=RandomStream(14), transform="none")
    assert len(set(s.statistics)) == 20
    assert s.passed
    again = run_replicates(make, K=20, B=99, alpha=0.05, stream=RandomStream(14), transform="none")
    assert again.p_values == s.p_values
