import io
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import stats

from portalchoice.analytics import (
    SIGNIFICANCE_NOTE,
    coefficient_vectors,
    correlate,
    pearson,
    pearson_significant,
    read_correlation,
    scatter_data,
    summarize_coefficients,
    write_correlation,
    write_scatter,
    write_summary,
)
from portalchoice.batch import CoefficientRecord


def rec(hh, var, coef, se=1.0, divergent=False, local_base=False):
    return CoefficientRecord(hh, var, coef, se, divergent, local_base)


def summary_of(records, var):
    return next(s for s in summarize_coefficients(records) if s.variable == var)


def test_constant_coefficients_zero_sd():
    s = summary_of([rec(f"h{i}", "loyalty", 0.7) for i in range(5)], "loyalty")
    assert s.mean == pytest.approx(0.7)
    assert s.sd == 0.0 and s.se_of_mean == 0.0


def test_two_values_mean_sd_se():
    s = summary_of([rec("a", "loyalty", 1.0), rec("b", "loyalty", 3.0)], "loyalty")
    assert (s.mean, s.sd, s.se_of_mean) == pytest.approx((2.0, math.sqrt(2), 1.0))


def test_significance_percentages():
    recs = [rec("a", "loyalty", 3.0), rec("b", "loyalty", -3.0),
            rec("c", "loyalty", 0.5), rec("d", "loyalty", 1.9)]
    s = summary_of(recs, "loyalty")
    assert s.pct_sig_pos == pytest.approx(25.0)
    assert s.pct_sig_neg == pytest.approx(25.0)


def test_missing_se_never_significant():
    s = summary_of([rec("a", "loyalty", 5.0, se=None), rec("b", "loyalty", 1.0)], "loyalty")
    assert s.pct_sig_pos == 0.0


def test_divergent_excluded_from_moments_and_counted():
    recs = [rec("a", "loyalty", 1.0), rec("b", "loyalty", 3.0),
            rec("c", "loyalty", 20.0, se=None, divergent=True)]
    s = summary_of(recs, "loyalty")
    assert s.mean == pytest.approx(2.0)
    assert (s.n_households, s.n_divergent) == (2, 1)


def test_local_base_brand_rows_excluded():
    recs = [rec("a", "brand:M", -1.0), rec("b", "brand:M", 5.0, local_base=True),
            rec("b", "loyalty", 1.0, local_base=True)]
    out = summarize_coefficients(recs)
    brand = next(s for s in out if s.variable == "brand:M")
    assert brand.mean == -1.0 and brand.n_households == 1
    assert next(s for s in out if s.variable == "loyalty").n_households == 1


def test_summary_order_and_market():
    recs = [rec("a", "brand:Z", 0.0), rec("a", "brand:B", 0.0), rec("a", "missing_data", 0.0),
            rec("a", "loyalty", 0.0)]
    names = [s.variable for s in summarize_coefficients(recs, market=["A", "Z", "B"])]
    assert names == ["loyalty", "missing_data", "brand:Z", "brand:B"]


def test_empty_summary_rejected():
    with pytest.raises(ValueError):
        summarize_coefficients([])


def test_summary_file_columns():
    buf = io.StringIO()
    write_summary(summarize_coefficients([rec("a", "loyalty", 1.0), rec("b", "loyalty", 2.0)]), buf)
    assert buf.getvalue().splitlines()[0] == "variable,mean,se_of_mean,sd,pct_sig_pos,pct_sig_neg"


# correlation

def test_perfect_correlations():
    x = np.arange(6.0)
    assert pearson(x, 2 * x + 1) == 1.0
    assert pearson(x, -x) == -1.0


def test_hand_computed_correlation():
    # deviations (-1, 0, 1) and (-4/3, -1/3, 5/3): cov sum 3, ss 2 and 42/9
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(3 / math.sqrt(2 * 42 / 9), abs=1e-12)
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198, abs=1e-5)


def test_constant_vector_is_nan():
    assert math.isnan(pearson([1, 1, 1], [1, 2, 3]))


@pytest.mark.parametrize("seed", range(10))
def test_significance_matches_reference_test(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 60))
    x = rng.normal(size=n)
    y = 0.3 * x + rng.normal(size=n)
    r = pearson(x, y)
    ref = stats.pearsonr(x, y)
    assert r == pytest.approx(ref.statistic, abs=1e-12)
    if abs(ref.pvalue - 0.05) > 1e-9:
        assert pearson_significant(r, n) == (ref.pvalue < 0.05)


vecs = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=30)


@given(vecs, st.floats(0.1, 10), st.floats(-100, 100), st.floats(0.1, 10), st.floats(-100, 100))
def test_affine_invariance(x, a, b, c, d):
    x = np.array(x)
    y = np.roll(x, 1) + 0.5 * x
    assume(np.ptp(x) > 1e-3 and np.ptp(y) > 1e-3)
    assert pearson(a * x + b, c * y + d) == pytest.approx(pearson(x, y), abs=1e-9)


@given(vecs)
def test_bounded(x):
    x = np.array(x)
    y = x[::-1] ** 2
    r = pearson(x, y)
    assert math.isnan(r) or -1.0 <= r <= 1.0


def test_matrix_symmetric_with_unit_diagonal():
    rng = np.random.default_rng(4)
    data = {v: {f"h{i}": float(rng.normal()) for i in range(30)} for v in "abcd"}
    m = correlate(data)
    np.testing.assert_array_equal(m.r, m.r.T)
    np.testing.assert_array_equal(np.diag(m.r), 1.0)
    assert not m.significant.diagonal().any()
    np.testing.assert_array_equal(m.significant, m.significant.T)


def test_pairwise_complete_overlap():
    data = {"a": {"h1": 1.0, "h2": 2.0, "h3": 3.0, "h4": 9.0},
            "b": {"h1": 1.0, "h2": 2.0, "h3": 4.0}}
    m = correlate(data)
    assert m.n[0, 1] == 3
    assert m.r[0, 1] == pytest.approx(0.98198, abs=1e-5)


def test_too_little_overlap_is_blank():
    m = correlate({"a": {"h1": 1.0, "h2": 2.0}, "b": {"h1": 3.0, "h2": 1.0}})
    assert math.isnan(m.r[0, 1]) and not m.significant[0, 1]


def test_correlation_file_round_trip_and_mark():
    x = {f"h{i}": float(i) for i in range(10)}
    y = {f"h{i}": float(i * i) for i in range(10)}
    m = correlate({"x": x, "y": y})
    buf = io.StringIO()
    write_correlation(m, buf)
    text = buf.getvalue()
    assert text.rstrip().endswith(SIGNIFICANCE_NOTE)
    assert text.splitlines()[1].split(",")[2].endswith("a")
    back = read_correlation(io.StringIO(text))
    np.testing.assert_allclose(back.r, m.r, atol=5e-7)
    np.testing.assert_array_equal(back.significant, m.significant)


def test_vectors_drop_divergent_and_local_base_brands():
    recs = [rec("a", "loyalty", 1.0), rec("b", "loyalty", 20.0, divergent=True),
            rec("a", "brand:M", 0.5, local_base=True), rec("c", "brand:M", 0.2)]
    v = coefficient_vectors(recs)
    assert v == {"loyalty": {"a": 1.0}, "brand:M": {"c": 0.2}}


# scatter

def test_scatter_points_and_svg(tmp_path):
    recs = [rec(f"h{i}", "loyalty", float(i)) for i in range(4)]
    recs += [rec(f"h{i}", "ln_last_pages", float(-i)) for i in range(1, 5)]
    recs += [rec("h4", "loyalty", 20.0, divergent=True)]
    pts = scatter_data(recs, "loyalty", "ln_last_pages")
    assert [p[0] for p in pts] == ["h1", "h2", "h3"]
    svg, csv_path = tmp_path / "s.svg", tmp_path / "s.csv"
    write_scatter(pts, "loyalty", "ln_last_pages", svg, csv_path)
    assert svg.read_text().lstrip().startswith("<?xml")
    assert len(csv_path.read_text().splitlines()) == 4
    first = svg.read_bytes()
    write_scatter(pts, "loyalty", "ln_last_pages", svg)
    assert svg.read_bytes() == first


def test_scatter_requires_overlap():
    with pytest.raises(ValueError):
        scatter_data([rec("a", "loyalty", 1.0)], "loyalty", "ln_last_pages")
