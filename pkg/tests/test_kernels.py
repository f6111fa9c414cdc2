"""Kernel fallback correctness plus compiled/numpy parity when both exist."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plotsearch import kernels
from plotsearch.kernels import _ref


def test_implementation_flag_is_known():
    assert kernels.IMPLEMENTATION in ("compiled", "numpy")


def test_interest_curve_center_is_exactly_one():
    out = _ref.interest_curve([4.0], center=4.0, width=0.6)
    assert out[0] == 1.0


def test_interest_curve_matches_closed_form():
    # exp(-(5-4)^2 / (2*0.6^2)), frozen via high-precision arithmetic
    out = _ref.interest_curve([5.0], center=4.0, width=0.6)
    assert out[0] == pytest.approx(0.2493522087772962, abs=1e-12)


def test_band_fraction_counts_inclusive_band():
    s = [3.5, 4.0, 4.59, 4.61, 2.0]
    assert _ref.band_fraction(s, center=4.0, width=0.6) == pytest.approx(3 / 5)


def test_band_fraction_empty_is_zero():
    assert _ref.band_fraction([], center=4.0, width=0.6) == 0.0


def test_moving_average_window_one_is_identity():
    x = [1.0, 2.0, 3.0]
    assert np.allclose(_ref.moving_average(x, 1), x)


def test_moving_average_simple():
    out = _ref.moving_average([1.0, 2.0, 3.0, 4.0], 2)
    assert np.allclose(out, [1.5, 2.5, 3.5])


def test_moving_average_rejects_short_series():
    with pytest.raises(ValueError):
        _ref.moving_average([1.0], 2)


def test_peak_indices_triangular_bump():
    # flat 2s, single peak of height 6 at index 3
    series = [2.0, 2.0, 4.0, 6.0, 4.0, 2.0, 2.0]
    idx = _ref.peak_indices(series, prominence=1.0)
    assert idx.tolist() == [3]


def test_peak_indices_prominence_filters():
    series = [0.0, 1.0, 0.5, 3.0, 0.0]
    assert _ref.peak_indices(series, prominence=2.0).tolist() == [3]
    assert _ref.peak_indices(series, prominence=0.5).tolist() == [1, 3]


def test_peak_indices_endpoints_never_peak():
    assert _ref.peak_indices([9.0, 1.0, 9.0], prominence=0.1).tolist() == []


def test_pairwise_cosine_identical_rows_exact_one():
    v = np.tile([0.3, 0.4, 0.5], (4, 1))
    mean, std = _ref.pairwise_cosine_mean_std(v)
    assert mean == 1.0
    assert std == 0.0


def test_pairwise_cosine_orthogonal():
    v = np.eye(3)
    mean, std = _ref.pairwise_cosine_mean_std(v)
    assert mean == pytest.approx(0.0, abs=1e-12)


def test_pairwise_cosine_needs_two():
    with pytest.raises(ValueError):
        _ref.pairwise_cosine_mean_std(np.ones((1, 3)))


def test_ucb_scores_frozen_example():
    # mean 0.6, edge visits 2, parent visits 10, c=1.4
    out = _ref.ucb_scores([0.6], [2], 10, 1.4)
    assert out[0] == pytest.approx(2.1021762184025431, abs=1e-12)


def test_ucb_scores_unvisited_is_inf():
    out = _ref.ucb_scores([0.0, 0.5], [0, 3], 7, 1.4)
    assert math.isinf(out[0])
    assert math.isfinite(out[1])


@given(
    st.lists(st.floats(min_value=0.0, max_value=20.0), min_size=1, max_size=50),
    st.floats(min_value=1.0, max_value=8.0),
    st.floats(min_value=0.1, max_value=2.0),
)
def test_interest_curve_bounded(series, center, width):
    out = _ref.interest_curve(series, center, width)
    assert np.all(out >= 0.0) and np.all(out <= 1.0)


@pytest.mark.skipif(kernels.IMPLEMENTATION != "compiled", reason="compiled kernels absent")
class TestCompiledParity:
    """The compiled module must agree with the numpy reference."""

    def setup_method(self):
        from plotsearch.kernels import _fastk

        self.fast = _fastk
        self.rng = np.random.default_rng(20260822)

    def test_interest_curve_parity(self):
        s = self.rng.uniform(0, 12, 500)
        assert np.allclose(self.fast.interest_curve(s, 4.0, 0.6), _ref.interest_curve(s, 4.0, 0.6), atol=1e-12)

    def test_band_fraction_parity(self):
        s = self.rng.uniform(0, 12, 500)
        assert self.fast.band_fraction(s, 4.0, 0.6) == _ref.band_fraction(s, 4.0, 0.6)

    def test_moving_average_parity(self):
        s = self.rng.uniform(0, 12, 200)
        for w in (1, 3, 5, 200):
            assert np.allclose(self.fast.moving_average(s, w), _ref.moving_average(s, w), atol=1e-12)

    def test_peak_indices_parity(self):
        s = self.rng.uniform(0, 12, 300)
        for prom in (0.1, 1.0, 3.0):
            assert np.array_equal(self.fast.peak_indices(s, prom), _ref.peak_indices(s, prom))

    def test_pairwise_cosine_parity(self):
        v = self.rng.normal(size=(40, 16))
        got = self.fast.pairwise_cosine_mean_std(v)
        want = _ref.pairwise_cosine_mean_std(v)
        assert got[0] == pytest.approx(want[0], abs=1e-10)
        assert got[1] == pytest.approx(want[1], abs=1e-10)

    def test_ucb_parity(self):
        q = self.rng.uniform(0, 1, 100)
        n = self.rng.integers(0, 20, 100)
        got = self.fast.ucb_scores(q, n, 57, 1.414)
        want = _ref.ucb_scores(q, n, 57, 1.414)
        finite = np.isfinite(want)
        assert np.array_equal(np.isfinite(got), finite)
        assert np.allclose(got[finite], want[finite], atol=1e-12)
