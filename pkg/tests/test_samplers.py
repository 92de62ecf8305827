import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from recordgrid.rand import RandomStream
from recordgrid.records import max_abs_minor, reflect_entries
from recordgrid.samplers import (IDENTITY_NAMES, IdentitySpec, SampleBatch, draw_variables,
                                 eq1_lhs_from, eq1_rhs_from, identity_pair, m1n_entries_from,
                                 rowprod_lhs_from, rowprod_rhs_from, sample_eq1, sample_eq3,
                                 sample_identity, sample_m1n_closed, sample_negcontrol,
                                 sample_prop1, sample_rowprod, sample_totalarea, totalarea_from)

unit = st.floats(1e-6, 1 - 1e-6)
expo = st.floats(1e-6, 30.0)


def test_m1n_example_values():
    m = m1n_entries_from([[0.5, 0.5]], [[1.0, 1.0]], 2)[0]
    assert m.tolist() == [[0.5, 1.0], [0.25, 0.5]]
    assert m1n_entries_from([[0.5]], [[1.0]], 1)[0].tolist() == [[0.5]]


def test_eq1_examples():
    # n=1: u = (0.5, 0.5), e = (1, 1)
    u, e = np.array([[0.5, 0.5]]), np.array([[1.0, 1.0]])
    assert eq1_lhs_from(u, e, 1)[0] == 1.5
    assert eq1_rhs_from(u, e, 1)[0] == 1.5


def test_eq3_examples():
    m = m1n_entries_from([[0.5, 0.25]], [[1.0, 2.0]], 2)[0]
    assert m.tolist() == [[0.5, 2.0], [0.375, 1.5]]
    assert reflect_entries(m).tolist() == [[1.5, 2.0], [0.375, 0.5]]
    sym = m1n_entries_from([[0.5, 0.5]], [[1.0, 1.0]], 2)[0]
    assert np.array_equal(reflect_entries(sym), sym)


def test_rowprod_and_totalarea_examples():
    u, e = np.array([[0.5, 0.5]]), np.array([[1.0, 1.0]])
    assert rowprod_lhs_from(u, e, 2)[0] == 0.5
    assert rowprod_rhs_from(u, e, 2)[0] == 0.5
    assert totalarea_from([[0.5]], [[1.0]], 1)[0] == 0.5


@given(st.integers(1, 8), st.data())
def test_closed_form_matrix_matches_its_formula(n, data):
    u = np.array([data.draw(st.lists(unit, min_size=n, max_size=n))])
    e = np.array([data.draw(st.lists(expo, min_size=n, max_size=n))])
    m = m1n_entries_from(u, e, n)[0]
    for i in range(n):
        for j in range(n):
            h = np.prod(u[0, :i]) * (1 - u[0, i])
            w = e[0, j] / np.prod(u[0, :j])
            assert m[i, j] == pytest.approx(h * w, rel=1e-12)
    assert max_abs_minor(m) <= 1e-12 * m.max() ** 2


@given(st.integers(1, 8), st.data())
def test_pathwise_reductions(n, data):
    u = np.array([data.draw(st.lists(unit, min_size=n + 1, max_size=n + 1))])
    e = np.array([data.draw(st.lists(expo, min_size=n + 1, max_size=n + 1))])
    m = m1n_entries_from(u, e, n)[0]
    # row product is the first row's product, its partner the last column's
    assert rowprod_lhs_from(u, e, n)[0] == pytest.approx(np.prod(m[0, :]), rel=1e-9)
    assert rowprod_rhs_from(u, e, n)[0] == pytest.approx(np.prod(m[:, -1]), rel=1e-9)
    assert totalarea_from(u, e, n)[0] == pytest.approx(m.sum(), rel=1e-12)
    # all-but-last-row sums of the order-(n+1) matrix and of its reflection
    big = m1n_entries_from(u, e, n + 1)[0]
    assert eq1_rhs_from(u, e, n)[0] == pytest.approx(big[:-1].sum(), rel=1e-12)


def test_single_draw_samplers_consume_fixed_order():
    u = RandomStream(7, "v").uniforms((1, 2, 2))
    uu, ee = u[:, :, 0], -np.log(u[:, :, 1])
    m = sample_m1n_closed(RandomStream(7, "v"), 2)
    np.testing.assert_array_equal(m.entries, m1n_entries_from(uu, ee, 2)[0])
    np.testing.assert_array_equal(sample_eq3(RandomStream(7, "v"), "lhs"), m.entries)
    np.testing.assert_array_equal(sample_eq3(RandomStream(7, "v"), "rhs"), reflect_entries(m.entries))
    assert sample_prop1(RandomStream(7, "v"), 2, "rhs").tolist() == reflect_entries(m.entries).reshape(-1).tolist()


def test_scalar_samplers_are_positive_and_validated():
    s = RandomStream(8)
    for n in (1, 3):
        assert sample_eq1(s, n, "lhs") > 0 and sample_eq1(s, n, "rhs") > 0
        assert sample_rowprod(s, n, "lhs") > 0
        assert sample_totalarea(s, n, "closed") > 0
        assert sample_totalarea(s, n, "geom") > 0
    with pytest.raises(ValueError):
        sample_eq1(s, 1, "middle")
    with pytest.raises(ValueError):
        sample_m1n_closed(s, 0)


def test_negcontrol_transpose_shape():
    t = sample_negcontrol(RandomStream(9, "t"), "transpose", 2)
    m = sample_identity(IdentitySpec("prop1_lhs", 2), RandomStream(9, "t"), 1).rows[0]
    assert t.tolist() == m.reshape(2, 2).T.reshape(-1).tolist()


def test_identity_specs():
    assert IdentitySpec("prop1_lhs", 3).output_dim == 9
    assert IdentitySpec("eq1_lhs", 3).output_dim == 1
    assert IdentitySpec("eq3_lhs", 5).n == 2
    assert IdentitySpec("eq2_rhs", 4).n == 1
    with pytest.raises(ValueError):
        IdentitySpec("eq9_lhs")
    with pytest.raises(ValueError):
        IdentitySpec("eq1_lhs", 0)


@pytest.mark.parametrize("name", IDENTITY_NAMES)
def test_every_identity_samples_finite_rows(name):
    spec = IdentitySpec(name, 3)
    b = sample_identity(spec, RandomStream(10, name), 500)
    assert b.rows.shape == (500, spec.output_dim)
    assert np.isfinite(b.rows).all() and (b.rows >= 0).all()


def test_sample_batch_rejects_non_finite():
    with pytest.raises(ValueError):
        SampleBatch(IdentitySpec("eq1_lhs"), np.array([[np.inf]]), 0, "x", 0)


def test_sampling_is_deterministic():
    spec = IdentitySpec("totalarea_geom", 2)
    a = sample_identity(spec, RandomStream(11, "d"), 100).rows
    b = sample_identity(spec, RandomStream(11, "d"), 100).rows
    assert np.array_equal(a, b)


def test_diagonal_and_subdiagonal_means():
    u, e = draw_variables(RandomStream(12, "means"), 3, 10**6)
    m = m1n_entries_from(u, e, 3)
    for i in range(3):
        x = m[:, i, i]
        assert abs(x.mean() - 0.5) <= 3 * x.std() / 1e3
    for i in range(2):
        x = m[:, i + 1, i]
        assert abs(x.mean() - 0.25) <= 3 * x.std() / 1e3


def test_transpose_control_entry_is_heavy_tailed():
    # the (1,2) entry of M has infinite mean; batch medians of block means keep growing
    u, e = draw_variables(RandomStream(13, "heavy"), 2, 10**6)
    m = m1n_entries_from(u, e, 2)
    upper, lower = m[:, 0, 1], m[:, 1, 0]
    small = np.median(upper.reshape(-1, 100).mean(axis=1))
    large = np.median(upper.reshape(-1, 10_000).mean(axis=1))
    assert large > small + 0.5
    assert abs(lower.mean() - 0.25) < 0.01


def test_geometric_total_area_matches_closed_in_law():
    a = sample_identity(IdentitySpec("totalarea_closed", 2), RandomStream(14, "c"), 20_000).rows[:, 0]
    b = sample_identity(IdentitySpec("totalarea_geom", 2), RandomStream(14, "g"), 20_000).rows[:, 0]
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_c00_and_c11_differ():
    a = sample_identity(IdentitySpec("negcontrol_c00"), RandomStream(15, "a"), 20_000).rows[:, 0]
    b = sample_identity(IdentitySpec("c11_geom"), RandomStream(15, "b"), 20_000).rows[:, 0]
    assert stats.ks_2samp(a, b).pvalue < 1e-6


def test_identity_pairs():
    assert identity_pair("eq2").name == "eq2"
    assert identity_pair("prop1", 3).name == "prop1_n3"
    assert identity_pair("negcontrol_transpose").expected == "reject"
    with pytest.raises(ValueError):
        identity_pair("nope")
    a, b = identity_pair("eq1", 2).sample_pair(RandomStream(16), 50)
    assert a.shape == b.shape == (50, 1)
