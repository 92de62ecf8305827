import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from recordgrid.rand import RandomStream, StreamId, derive_key, words_to_uniforms


def test_uniform_moments():
    u = RandomStream(11, "u").uniforms(10**6)
    assert abs(u.mean() - 0.5) < 0.002
    assert abs(u.var() - 1 / 12) < 0.001


def test_uniforms_stay_inside_open_interval():
    extremes = np.array([0, 2**64 - 1], dtype=np.uint64)
    u = words_to_uniforms(extremes)
    assert 0.0 < u[0] < u[1] < 1.0
    assert u[0] == 2.0**-53 and u[1] == 1.0 - 2.0**-53


def test_exponential_moments_and_tail():
    e = RandomStream(12, "e").exponentials(10**6)
    assert abs(e.mean() - 1.0) < 0.004
    assert abs((e > 1).mean() - math.exp(-1)) < 0.002


def test_inverse_cdf_at_half_is_log_two():
    assert -math.log(0.5) == pytest.approx(math.log(2))
    # the word whose top bits encode exactly 0.5 - 2^-53
    w = np.array([1 << 63], dtype=np.uint64)
    assert -np.log(words_to_uniforms(w))[0] == pytest.approx(math.log(2), abs=1e-12)


def test_poisson_zero_mean():
    s = RandomStream(1, "p")
    assert (s.poisson_counts(0.0, 1000) == 0).all()
    assert s.next_poisson_count(0.0) == 0


@pytest.mark.parametrize("mean", [-1.0, math.inf, math.nan])
def test_poisson_domain_errors(mean):
    with pytest.raises(ValueError):
        RandomStream(1).poisson_counts(mean, 3)


def test_poisson_mean_four_moments():
    k = RandomStream(13, "p4").poisson_counts(4.0, 10**6)
    assert abs(k.mean() - 4.0) < 0.01
    assert abs(k.var() - 4.0) < 0.03


def test_poisson_mean_one_zero_fraction():
    k = RandomStream(14, "p1").poisson_counts(1.0, 10**6)
    assert abs((k == 0).mean() - math.exp(-1)) < 0.002


@pytest.mark.parametrize("mean", [45.0, 400.0])
def test_poisson_rejection_branch_matches_pmf(mean):
    k = RandomStream(15, "ptrs").poisson_counts(mean, 200_000)
    assert abs(k.mean() - mean) < 5 * math.sqrt(mean / k.size)
    assert abs(k.var() / mean - 1) < 0.02
    # chi-square over central cells
    lo, hi = int(mean - 2 * math.sqrt(mean)), int(mean + 2 * math.sqrt(mean))
    cells = np.arange(lo, hi + 1)
    obs = np.array([(k == c).sum() for c in cells])
    exp = stats.poisson.pmf(cells, mean) * k.size
    chi2 = ((obs - exp) ** 2 / exp).sum()
    assert stats.chi2.sf(chi2, cells.size - 1) > 1e-3


def test_poisson_scalar_and_batch_agree():
    a = RandomStream(16, "pp")
    b = RandomStream(16, "pp")
    batch = a.poisson_counts(3.5, 50)
    single = [b.next_poisson_count(3.5) for _ in range(50)]
    assert batch.tolist() == single


def test_determinism_and_random_access():
    s = RandomStream(99, "x", 3)
    first = s.uniforms(1000)
    again = RandomStream(99, "x", 3).uniforms(1000)
    assert np.array_equal(first, again)
    jumped = RandomStream(99, "x", 3).at(617)
    assert jumped.next_uniform() == first[617]
    assert jumped.counter == 618


def test_counter_tracks_words():
    s = RandomStream(1)
    s.uniforms((3, 4))
    s.next_exponential()
    assert s.counter == 13


def test_distinct_ids_give_uncorrelated_streams():
    base = RandomStream(5, "a")
    others = [RandomStream(5, "b"), RandomStream(5, "a", 1), RandomStream(6, "a"), base.spawn("a")]
    x = base.uniforms(10**5)
    for other in others:
        r = np.corrcoef(x, other.uniforms(10**5))[0, 1]
        assert abs(r) < 0.015


def test_spawn_depends_on_parent_index():
    a = RandomStream(1, "rep", 0).spawn("data")
    b = RandomStream(1, "rep", 1).spawn("data")
    assert a.id != b.id
    assert not np.array_equal(a.uniforms(4), b.uniforms(4))


def test_stream_id_validation():
    with pytest.raises(ValueError):
        StreamId("", 0)
    with pytest.raises(ValueError):
        StreamId("ok", -1)
    with pytest.raises(ValueError):
        StreamId("café")
    with pytest.raises(ValueError):
        derive_key(-1, StreamId("x"))
    with pytest.raises(ValueError):
        derive_key(2**64, StreamId("x"))


def test_shuffle_small_cases():
    s = RandomStream(3)
    assert s.shuffle_in_place([]) == []
    assert s.shuffle_in_place(["only"]) == ["only"]


def test_shuffle_two_items_balanced():
    s = RandomStream(21, "shuffle")
    flips = sum(s.shuffle_in_place([0, 1])[0] == 1 for _ in range(10**5))
    assert abs(flips / 10**5 - 0.5) < 0.01


def test_shuffle_three_items_uniform_over_orders():
    s = RandomStream(22, "shuffle3")
    counts = {}
    for _ in range(30_000):
        key = tuple(s.shuffle_in_place([0, 1, 2]))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 6
    obs = np.array(list(counts.values()))
    assert stats.chisquare(obs).pvalue > 1e-3


@given(st.lists(st.integers(), max_size=40), st.integers(0, 2**64 - 1))
def test_shuffle_is_a_permutation(items, seed):
    out = RandomStream(seed, "prop").shuffle_in_place(list(items))
    assert sorted(out) == sorted(items)


@given(st.integers(0, 2**64 - 1), st.integers(1, 50))
def test_uniform_range_property(seed, n):
    u = RandomStream(seed).uniforms(n)
    assert ((u > 0) & (u < 1)).all()
