import numpy as np
import pytest
from hypothesis import given, strategies as st

from aspectmf.temporal import (SECONDS_PER_DAY, TemporalContext, bin_index,
                               day_index, deviation, mean_rating_day)

# frozen reference: 16 ** 0.4 evaluated independently
DEV_16_04 = 3.0314331330207964


class TestDayIndex:
    def test_epoch_start(self):
        assert day_index(0) == 0

    def test_day_boundary(self):
        assert day_index(86_399) == 0
        assert day_index(86_400) == 1

    def test_large_timestamp(self):
        assert day_index(1_000_000) == 11

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            day_index(-1)

    @given(st.integers(min_value=0, max_value=10**12),
           st.integers(min_value=0, max_value=10**6))
    def test_non_decreasing(self, ts, delta):
        assert day_index(ts + delta) >= day_index(ts)


class TestMeanRatingDay:
    def test_singleton(self):
        assert mean_rating_day([50]) == 50.0

    def test_simple_mean(self):
        assert mean_rating_day([10, 20, 30]) == 20.0

    def test_non_integer_result_kept(self):
        assert mean_rating_day([0, 1]) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mean_rating_day([])


class TestDeviation:
    def test_zero_at_reference_day(self):
        assert deviation(50.0, 50.0, 0.4) == 0.0

    def test_positive_offset(self):
        assert deviation(66.0, 50.0, 0.4) == pytest.approx(DEV_16_04, abs=1e-12)

    def test_negative_offset(self):
        assert deviation(34.0, 50.0, 0.4) == pytest.approx(-DEV_16_04, abs=1e-12)

    @given(st.floats(min_value=0, max_value=1e4, allow_nan=False),
           st.floats(min_value=0.05, max_value=3.0))
    def test_antisymmetry(self, d, beta):
        t_u = 500.0
        assert deviation(t_u + d, t_u, beta) == pytest.approx(
            -deviation(t_u - d, t_u, beta), rel=1e-9, abs=1e-9)

    @given(st.floats(min_value=-1e4, max_value=1e4),
           st.floats(min_value=0.01, max_value=1e3),
           st.floats(min_value=0.05, max_value=3.0))
    def test_strictly_increasing(self, t, step, beta):
        assert deviation(t + step, 0.0, beta) > deviation(t, 0.0, beta)


class TestBinIndex:
    def test_thirty_year_span_maps_years_to_bins(self):
        ctx = TemporalContext(num_bins=30, t_min=0, t_max=30 * 365 - 1)
        for day in (0, 364, 365, 5 * 365 + 17, 29 * 365 + 364):
            assert bin_index(day, ctx) == day // 365

    def test_single_bin(self):
        ctx = TemporalContext(num_bins=1, t_min=0, t_max=999)
        assert bin_index(0, ctx) == 0
        assert bin_index(500, ctx) == 0
        assert bin_index(999, ctx) == 0

    def test_equal_width(self):
        ctx = TemporalContext(num_bins=10, t_min=0, t_max=99)
        assert bin_index(37, ctx) == 3

    def test_out_of_range_clamps(self):
        ctx = TemporalContext(num_bins=10, t_min=100, t_max=199)
        assert bin_index(5, ctx) == 0
        assert bin_index(10_000, ctx) == 9

    @given(st.integers(min_value=-1000, max_value=5000),
           st.integers(min_value=0, max_value=1000),
           st.integers(min_value=1, max_value=40))
    def test_bounded_and_monotone(self, t, step, nbins):
        ctx = TemporalContext(num_bins=nbins, t_min=0, t_max=3000)
        b0, b1 = bin_index(t, ctx), bin_index(t + step, ctx)
        assert 0 <= b0 < nbins
        assert b1 >= b0


class TestTemporalContext:
    def test_from_dataset(self, tiny_dataset):
        ctx = TemporalContext.from_dataset(tiny_dataset, beta=0.4, num_bins=6)
        assert ctx.t_min == 0
        assert ctx.t_max == 60
        # user 0 rated on days 0, 10, 40
        assert ctx.t_u[0] == pytest.approx(50 / 3)
        assert len(ctx.t_u) == tiny_dataset.num_users

    def test_reference_days_inside_span(self, tiny_dataset):
        ctx = TemporalContext.from_dataset(tiny_dataset)
        assert np.all(ctx.t_u >= ctx.t_min)
        assert np.all(ctx.t_u <= ctx.t_max)

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ValueError):
            TemporalContext(beta=0.0)
        with pytest.raises(ValueError):
            TemporalContext(num_bins=0)
        with pytest.raises(ValueError):
            TemporalContext(t_min=5, t_max=1)

    def test_unseen_user_gets_midpoint(self, tiny_dataset):
        ctx = TemporalContext.from_dataset(tiny_dataset)
        assert ctx.user_day(99) == pytest.approx(30.0)

    def test_day_length_constant(self):
        assert SECONDS_PER_DAY == 86_400
