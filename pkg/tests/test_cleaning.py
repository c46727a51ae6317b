import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_series, series_of
from oracles import aggregate_reference, cutoff_reference, zscore_reference
from wattcast.cleaning import (
    AggregationConfig,
    CutoffConfig,
    ZScoreConfig,
    aggregate,
    clean_pipeline,
    cutoff_filter,
    zscore_substitute,
)
from wattcast.series import parse_timestamp


class TestConfigs:
    def test_cutoff_order(self):
        with pytest.raises(ValueError):
            CutoffConfig(alpha=5.0, beta=1.0)

    def test_zscore_positivity(self):
        with pytest.raises(ValueError):
            ZScoreConfig(window_seconds=0)
        with pytest.raises(ValueError):
            ZScoreConfig(omega=0.0)

    def test_aggregation_range(self):
        with pytest.raises(ValueError):
            AggregationConfig(bin_seconds=0, start=0, end=100)
        with pytest.raises(ValueError):
            AggregationConfig(bin_seconds=300, start=100, end=100)

    def test_defaults_follow_protocol(self):
        assert CutoffConfig() == CutoffConfig(0.0, 10_000.0)
        z = ZScoreConfig()
        assert z.window_seconds == 7 * 86_400
        assert z.omega == 3.0


class TestCutoff:
    def test_clamps_both_sides(self):
        s = series_of([-5.0, 3.0, 50.0])
        out = cutoff_filter(s, CutoffConfig(alpha=0.0, beta=10.0))
        assert list(out.values) == [0.0, 3.0, 10.0]
        assert np.array_equal(out.timestamps, s.timestamps)

    def test_idempotent(self):
        s = series_of([-5.0, 3.0, 50.0])
        cfg = CutoffConfig(alpha=0.0, beta=10.0)
        once = cutoff_filter(s, cfg)
        assert cutoff_filter(once, cfg) == once

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e5, 1e5), min_size=1, max_size=50))
    def test_output_within_bounds(self, values):
        out = cutoff_filter(series_of(values), CutoffConfig(0.0, 10_000.0))
        assert np.all(out.values >= 0.0)
        assert np.all(out.values <= 10_000.0)


class TestZScore:
    def test_hand_case_substitutes_mean(self):
        # window [0, 2, 0]: mu = 2/3, sigma = sqrt(8/9); z(100) >> 3
        s = series_of([0.0, 2.0, 0.0, 100.0])
        out = zscore_substitute(s, ZScoreConfig(window_seconds=10, omega=3.0))
        expected = float(np.mean(np.array([0.0, 2.0, 0.0])))
        assert out.values[3] == expected
        assert list(out.values[:3]) == [0.0, 2.0, 0.0]

    def test_one_sided_low_values_kept(self):
        s = series_of([10.0, 11.0, 10.0, -50.0])
        out = zscore_substitute(s, ZScoreConfig(window_seconds=10, omega=3.0))
        assert out.values[3] == -50.0

    def test_substitutions_feed_forward(self):
        s = series_of([0.0, 2.0, 0.0, 100.0, 100.0])
        out = zscore_substitute(s, ZScoreConfig(window_seconds=10, omega=3.0))
        first_sub = float(np.mean(np.array([0.0, 2.0, 0.0])))
        window = np.array([0.0, 2.0, 0.0, first_sub])
        assert out.values[3] == first_sub
        # without feed-forward the second spike's window would contain 100
        # and its z-score would stay under the threshold
        raw_window = np.array([0.0, 2.0, 0.0, 100.0])
        assert (100.0 - raw_window.mean()) / raw_window.std() < 3.0
        assert out.values[4] == float(np.mean(window))

    def test_window_is_time_based(self):
        # identical values, but the old reading has left the window
        s = series_of([1.0, 2.0, 100.0], timestamps=[0, 10, 1000])
        out = zscore_substitute(s, ZScoreConfig(window_seconds=50, omega=1.0))
        assert out.values[2] == 100.0  # window had < 2 members

    def test_sigma_zero_passes_through(self):
        s = series_of([5.0, 5.0, 5.0, 1000.0])
        out = zscore_substitute(s, ZScoreConfig(window_seconds=100, omega=3.0))
        assert out.values[3] == 1000.0

    def test_first_elements_never_touched(self):
        s = series_of([1e9, 0.0])
        out = zscore_substitute(s, ZScoreConfig())
        assert out.values[0] == 1e9

    def test_matches_reference_on_messy_series(self, rng):
        for _ in range(25):
            s = random_series(rng, max_len=200)
            cfg = ZScoreConfig(window_seconds=int(rng.integers(60, 5_000)), omega=3.0)
            out = zscore_substitute(s, cfg)
            ref = zscore_reference(s.timestamps, s.values, cfg.window_seconds, cfg.omega)
            assert np.array_equal(out.values, ref)


class TestAggregate:
    def test_worked_example(self):
        # readings at 00:01 (3 W), 00:04 (9 W), 00:06 (2 W); 5-minute bins
        s = series_of([3.0, 9.0, 2.0], timestamps=[60, 240, 360])
        out = aggregate(s, AggregationConfig(bin_seconds=300, start=0, end=600))
        assert list(out.timestamps) == [300, 600]
        assert list(out.values) == [12.0, 2.0]

    def test_empty_bins_are_zero(self):
        s = series_of([5.0, 7.0], timestamps=[10, 910])
        out = aggregate(s, AggregationConfig(bin_seconds=300, start=0, end=1200))
        assert list(out.values) == [5.0, 0.0, 0.0, 7.0]

    def test_length_independent_of_content(self):
        cfg = AggregationConfig(bin_seconds=300, start=0, end=1000)
        assert cfg.n_bins == 4  # ceil(1000 / 300)
        sparse = aggregate(series_of([1.0], timestamps=[5]), cfg)
        dense = aggregate(
            series_of(np.ones(30), timestamps=np.arange(30) * 33), cfg
        )
        assert len(sparse) == len(dense) == 4

    def test_readings_outside_range_ignored(self):
        s = series_of([100.0, 1.0, 200.0], timestamps=[5, 150, 400])
        out = aggregate(s, AggregationConfig(bin_seconds=300, start=100, end=400))
        assert list(out.values) == [1.0]

    def test_protocol_calendar_bin_count(self):
        cfg = AggregationConfig(
            bin_seconds=300,
            start=parse_timestamp("2020-01-01T00:10:00Z"),
            end=parse_timestamp("2021-12-01T00:00:00Z"),
        )
        assert cfg.n_bins == 201_598

    def test_equal_spacing(self):
        s = series_of([1.0, 2.0, 3.0], timestamps=[0, 400, 800])
        out = aggregate(s, AggregationConfig(bin_seconds=300, start=0, end=900))
        assert np.all(np.diff(out.timestamps) == 300)

    def test_matches_reference_on_messy_series(self, rng):
        for _ in range(25):
            s = random_series(rng, max_len=200)
            start = int(s.timestamps[0] - rng.integers(0, 500))
            end = int(s.timestamps[-1] + rng.integers(1, 500))
            cfg = AggregationConfig(
                bin_seconds=int(rng.integers(1, 900)), start=start, end=end
            )
            out = aggregate(s, cfg)
            ref_ts, ref_vals = aggregate_reference(
                s.timestamps, s.values, cfg.bin_seconds, start, end
            )
            assert np.array_equal(out.timestamps, ref_ts)
            assert np.array_equal(out.values, ref_vals)

    def test_integer_sum_preserved_when_range_covers_all(self):
        values = np.arange(1.0, 31.0)
        s = series_of(values, timestamps=np.arange(30) * 70)
        out = aggregate(s, AggregationConfig(bin_seconds=300, start=0, end=2101))
        assert out.values.sum() == values.sum()


class TestPipeline:
    def test_composition_matches_stage_order(self, rng):
        s = random_series(rng, max_len=150)
        cut = CutoffConfig(0.0, 10_000.0)
        z = ZScoreConfig(window_seconds=3_000, omega=3.0)
        agg = AggregationConfig(
            bin_seconds=300, start=int(s.timestamps[0]), end=int(s.timestamps[-1]) + 1
        )
        manual = aggregate(zscore_substitute(cutoff_filter(s, cut), z), agg)
        assert clean_pipeline(s, cut, z, agg) == manual

    def test_matches_independent_references(self, rng):
        s = random_series(rng, max_len=150)
        cut = CutoffConfig(0.0, 10_000.0)
        z = ZScoreConfig(window_seconds=3_000, omega=3.0)
        agg = AggregationConfig(
            bin_seconds=300, start=int(s.timestamps[0]), end=int(s.timestamps[-1]) + 1
        )
        clamped = cutoff_reference(s.values, cut.alpha, cut.beta)
        substituted = zscore_reference(s.timestamps, clamped, z.window_seconds, z.omega)
        _, ref_vals = aggregate_reference(
            s.timestamps, substituted, agg.bin_seconds, agg.start, agg.end
        )
        assert np.array_equal(clean_pipeline(s, cut, z, agg).values, ref_vals)
