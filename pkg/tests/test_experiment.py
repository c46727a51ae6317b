import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import series_of
from oracles import mae_reference, rmse_reference
from wattcast.dataset import Scaler, SplitSpec, make_windows, split, windows_for_splits
from wattcast.experiment import (
    EvalReport,
    HyperGrid,
    MatrixConfig,
    SearchError,
    TrainConfig,
    TrialDiverged,
    TrialOutcome,
    canonical_config,
    default_grid,
    grid_axes,
    mae,
    persistence_mae,
    random_search,
    read_predictions_csv,
    read_report_csv,
    report_to_csv,
    report_to_text,
    rmse,
    run_matrix,
    sample_configs,
    train,
    write_predictions_csv,
)
from wattcast.experiment import CellResult, TrialConfig
from wattcast.models import ModelSpec, build

TINY_GRID = HyperGrid(
    {
        "conv_blocks": (2,),
        "filters": (4, 8),
        "kernel_size": (3,),
        "mlp_size": (8,),
        "learning_rate": (1e-3,),
        "batch_size": (16,),
    }
)


def toy_windows(n=80, n_timesteps=6, seed=0, noise=0.02):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    values = 0.5 + 0.3 * np.sin(2 * np.pi * t / 12) + rng.normal(0, noise, n)
    series = series_of(values, timestamps=t * 300)
    wt = make_windows(series, n_timesteps)
    cut = int(wt.n_samples * 0.8)
    train_t = type(wt)(wt.inputs[:cut], wt.targets[:cut])
    val_t = type(wt)(wt.inputs[cut:], wt.targets[cut:])
    return train_t, val_t


class TestMetrics:
    def test_hand_case(self):
        assert mae([0.0, 2.0], [1.0, 0.0]) == 1.5
        assert rmse([0.0, 2.0], [1.0, 0.0]) == pytest.approx(math.sqrt(2.5), abs=1e-15)

    def test_identity(self):
        y = np.arange(5.0)
        assert mae(y, y) == 0.0
        assert rmse(y, y) == 0.0

    def test_matches_streaming_reference(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 300))
            y = rng.normal(500, 200, n)
            y_hat = rng.normal(500, 200, n)
            assert mae(y, y_hat) == pytest.approx(mae_reference(y, y_hat), rel=1e-9)
            assert rmse(y, y_hat) == pytest.approx(rmse_reference(y, y_hat), rel=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=40),
        st.integers(0, 2**31),
    )
    def test_mae_never_exceeds_rmse(self, y, seed):
        y = np.asarray(y)
        y_hat = y + np.random.default_rng(seed).normal(size=y.shape)
        assert mae(y, y_hat) <= rmse(y, y_hat) + 1e-12

    def test_power_of_two_scale_contract_is_exact(self, rng):
        y = rng.normal(500, 100, 64)
        y_hat = rng.normal(500, 100, 64)
        c = 4.0
        assert mae(c * y, c * y_hat) == c * mae(y, y_hat)
        assert rmse(c * y, c * y_hat) == c * rmse(y, y_hat)

    def test_general_scale_contract(self, rng):
        y = rng.normal(500, 100, 64)
        y_hat = rng.normal(500, 100, 64)
        for c in (0.1, 3.7, 250.0):
            assert mae(c * y, c * y_hat) == pytest.approx(c * mae(y, y_hat), rel=1e-12)
            assert rmse(c * y, c * y_hat) == pytest.approx(c * rmse(y, y_hat), rel=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError, match="mismatch"):
            mae([1.0], [1.0, 2.0])
        with pytest.raises(ValueError, match="at least one"):
            rmse([], [])


class TestHyperGrid:
    def test_lstm_grid_axes(self):
        axes = default_grid("LSTM").axes
        assert axes["dropout_rate"] == (0.1, 0.2, 0.3)
        assert axes["lstm_layers"] == (2, 3, 4)
        assert axes["lstm_size"] == (64, 128, 256)
        assert axes["mlp_size"] == (32, 64)
        assert axes["learning_rate"] == (1e-4, 1e-3, 1e-2)
        assert axes["batch_size"] == (32, 64, 256)

    def test_cardinalities(self):
        assert default_grid("LSTM").size == 486
        assert default_grid("CNN").size == 216
        assert default_grid("CNN_LSTM").size == 144
        assert default_grid("TCN").size == 108

    def test_decode_encode_round_trip(self):
        grid = default_grid("TCN")
        for flat in (0, 1, 57, 107):
            assert grid.encode(grid.decode(flat)) == flat

    def test_decode_bounds(self):
        with pytest.raises(ValueError):
            default_grid("TCN").decode(108)

    def test_empty_axis_rejected(self):
        with pytest.raises(ValueError):
            HyperGrid({"a": ()})

    def test_grid_axes_returns_copy(self):
        axes = grid_axes("LSTM")
        axes["lstm_size"] = (1,)
        assert default_grid("LSTM").axes["lstm_size"] == (64, 128, 256)


class TestSampling:
    def test_without_replacement_and_reproducible(self):
        grid = default_grid("LSTM")
        a = sample_configs(grid, 10, master_seed=42)
        b = sample_configs(grid, 10, master_seed=42)
        assert [t.flat_index for t in a] == [t.flat_index for t in b]
        assert len({t.flat_index for t in a}) == 10

    def test_seed_changes_sample(self):
        grid = default_grid("LSTM")
        a = [t.flat_index for t in sample_configs(grid, 10, 0)]
        b = [t.flat_index for t in sample_configs(grid, 10, 1)]
        assert a != b

    def test_trial_seeds_are_master_xor_index(self):
        for t in sample_configs(default_grid("TCN"), 5, master_seed=12):
            assert t.seed == 12 ^ t.index

    def test_values_are_grid_members(self):
        grid = default_grid("CNN")
        for t in sample_configs(grid, 20, 7):
            for name, value in t.params.items():
                assert value in grid.axes[name]

    def test_singleton_grid(self):
        grid = HyperGrid({"learning_rate": (1e-3,), "batch_size": (32,)})
        (only,) = sample_configs(grid, 1, 5)
        assert only.params == {"learning_rate": 1e-3, "batch_size": 32}

    def test_n_iter_exceeding_grid_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            sample_configs(TINY_GRID, 3, 0)


class TestTrainLoop:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(max_epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(max_epochs=5, patience=6)
        with pytest.raises(ValueError):
            TrainConfig(loss="mae")

    def test_constant_target_converges_and_early_stops(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(40, 4, 1))
        from wattcast.dataset import WindowTensor

        train_t = WindowTensor(x, np.full(40, 0.5))
        val_t = WindowTensor(x[:10], np.full(10, 0.5))
        model = build(
            ModelSpec("CNN", 4, 0, dict(conv_blocks=1, filters=4, kernel_size=2, mlp_size=4))
        )
        result = train(model, train_t, val_t, TrainConfig(max_epochs=100, patience=3),
                       learning_rate=1e-2, batch_size=16)
        assert result.best_val_mse < 1e-3
        assert result.epochs_run < 100  # early stop fired

    def test_fixed_seed_identical_history(self):
        train_t, val_t = toy_windows()
        histories = []
        for _ in range(2):
            model = build(ModelSpec("CNN", 6, 2, dict(conv_blocks=2, filters=4, kernel_size=3, mlp_size=8)))
            result = train(model, train_t, val_t, TrainConfig(max_epochs=5, patience=5, seed=9),
                           learning_rate=1e-3, batch_size=16)
            histories.append([(h.train_mse, h.val_mse) for h in result.history])
        assert histories[0] == histories[1]

    def test_best_epoch_weights_restored(self):
        train_t, val_t = toy_windows()
        model = build(ModelSpec("CNN", 6, 2, dict(conv_blocks=2, filters=4, kernel_size=3, mlp_size=8)))
        result = train(model, train_t, val_t, TrainConfig(max_epochs=8, patience=8),
                       learning_rate=5e-3, batch_size=16)
        pred = model.predict(val_t.inputs)
        recomputed = float(np.mean((val_t.targets - pred) ** 2))
        assert recomputed == pytest.approx(result.best_val_mse, rel=1e-12)
        assert result.best_val_mse == min(h.val_mse for h in result.history)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self):
        train_t, val_t = toy_windows()
        model = build(ModelSpec("CNN", 6, 0, dict(conv_blocks=2, filters=4, kernel_size=3, mlp_size=8)))
        with pytest.raises(TrialDiverged):
            train(model, train_t, val_t, TrainConfig(max_epochs=30, patience=30),
                  learning_rate=1e160, batch_size=16)


class TestRandomSearch:
    def test_deterministic_and_selects_min(self):
        train_t, val_t = toy_windows()
        results = [
            random_search("CNN", 6, train_t, val_t, grid=TINY_GRID, n_iter=2,
                          master_seed=3, train_cfg=TrainConfig(max_epochs=3, patience=3))
            for _ in range(2)
        ]
        a, b = results
        assert [t.val_mae for t in a.trials] == [t.val_mae for t in b.trials]
        assert a.best.config.flat_index == b.best.config.flat_index
        assert a.best.val_mae == min(t.val_mae for t in a.trials)

    def test_selection_ordering_dominance_and_ties(self):
        def outcome(i, m, r):
            cfg = TrialConfig(i, i, {"learning_rate": 1e-3, "batch_size": 16}, i)
            return TrialOutcome(cfg, m, r, 1, 1)

        a, b = outcome(1, 0.1, 0.5), outcome(0, 0.2, 0.1)
        assert min([a, b], key=lambda o: o.sort_key) is a  # lower MAE wins
        c, d = outcome(1, 0.1, 0.2), outcome(0, 0.1, 0.3)
        assert min([c, d], key=lambda o: o.sort_key) is c  # RMSE breaks ties
        e, f = outcome(4, 0.1, 0.2), outcome(2, 0.1, 0.2)
        assert min([e, f], key=lambda o: o.sort_key) is f  # earlier index wins

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_diverged_trials_recorded_not_fatal(self):
        train_t, val_t = toy_windows()
        grid = HyperGrid(
            {
                "conv_blocks": (2,),
                "filters": (4,),
                "kernel_size": (3,),
                "mlp_size": (8,),
                "learning_rate": (1e160, 1e-3),
                "batch_size": (16,),
            }
        )
        result = random_search("CNN", 6, train_t, val_t, grid=grid, n_iter=2,
                               master_seed=0, train_cfg=TrainConfig(max_epochs=2, patience=2))
        diverged = [t for t in result.trials if t.error is not None]
        assert len(diverged) == 1
        assert diverged[0].val_mae == math.inf
        assert result.best.error is None

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_all_diverged_raises_search_error(self):
        train_t, val_t = toy_windows()
        grid = HyperGrid(
            {
                "conv_blocks": (2,),
                "filters": (4, 8),
                "kernel_size": (3,),
                "mlp_size": (8,),
                "learning_rate": (1e160,),
                "batch_size": (16,),
            }
        )
        with pytest.raises(SearchError):
            random_search("CNN", 6, train_t, val_t, grid=grid, n_iter=2,
                          master_seed=0, train_cfg=TrainConfig(max_epochs=2, patience=2))

    def test_build_best_reproduces_winning_model(self):
        train_t, val_t = toy_windows()
        result = random_search("CNN", 6, train_t, val_t, grid=TINY_GRID, n_iter=2,
                               master_seed=1, train_cfg=TrainConfig(max_epochs=3, patience=3))
        model = result.build_best()
        pred = model.predict(val_t.inputs)
        recomputed = float(np.mean(np.abs(val_t.targets - pred)))
        assert recomputed == pytest.approx(result.best.val_mae, rel=1e-12)


def protocol_series(n_days=6, bin_seconds=300, seed=5):
    n = n_days * 86_400 // bin_seconds
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    values = 600 + 200 * np.sin(2 * np.pi * t / 288) + rng.normal(0, 20, n)
    return series_of(values, timestamps=t * bin_seconds)


class TestRunMatrix:
    def test_rows_cover_families_by_windows(self):
        series = protocol_series()
        cfg = MatrixConfig(
            split=SplitSpec(4 * 86_400, 5 * 86_400),
            families=("CNN", "TCN"),
            windows=(6, 12),
            n_iter=1,
            master_seed=0,
            train=TrainConfig(max_epochs=2, patience=2),
            grids={
                "CNN": HyperGrid({"conv_blocks": (2,), "filters": (4,), "kernel_size": (3,),
                                  "mlp_size": (8,), "learning_rate": (1e-3,), "batch_size": (32,)}),
                "TCN": HyperGrid({"channels": (4,), "kernel_size": (3,), "dropout_rate": (0.1,),
                                  "learning_rate": (1e-3,), "batch_size": (32,)}),
            },
        )
        (report,) = run_matrix({"plant": series}, cfg)
        assert report.series_name == "plant"
        assert [(c.algorithm, c.window) for c in report.cells] == [
            ("CNN", 6), ("CNN", 12), ("TCN", 6), ("TCN", 12),
        ]
        for cell in report.cells:
            assert cell.error is None
            assert cell.mae_watts <= cell.rmse_watts
            assert cell.duration_minutes > 0
            assert cell.best_config
            assert len(cell.predictions_watts) == len(cell.targets_watts)

    def test_cell_failure_recorded_not_fatal(self):
        series = protocol_series(n_days=2)
        cfg = MatrixConfig(
            split=SplitSpec(86_400, int(1.5 * 86_400)),
            families=("CNN",),
            windows=(6, 100_000),  # second window longer than any split
            n_iter=1,
            train=TrainConfig(max_epochs=1, patience=1),
            grids={"CNN": HyperGrid({"conv_blocks": (2,), "filters": (4,), "kernel_size": (3,),
                                     "mlp_size": (8,), "learning_rate": (1e-3,), "batch_size": (32,)})},
        )
        (report,) = run_matrix({"s": series}, cfg)
        ok, bad = report.cells
        assert ok.error is None
        assert bad.error is not None and math.isnan(bad.mae_watts)

    def test_matrix_config_validation(self):
        with pytest.raises(ValueError):
            MatrixConfig(split=SplitSpec(0, 1), families=("NOPE",))
        with pytest.raises(ValueError):
            MatrixConfig(split=SplitSpec(0, 1), windows=())


class TestReportSerialization:
    @staticmethod
    def demo_report():
        cells = (
            CellResult("LSTM", 12, 128.61, 171.40, 22.43,
                       {"lstm_size": 64, "learning_rate": 1e-3},
                       targets_watts=np.array([500.0, 600.0]),
                       predictions_watts=np.array([510.0, 590.0]),
                       target_timestamps=np.array([300, 600])),
            CellResult("TCN", 288, 150.25, 201.5, 30.00, {"channels": 32}),
        )
        return EvalReport("analyser", cells)

    def test_csv_round_trip_exact_metrics(self, tmp_path):
        report = self.demo_report()
        path = tmp_path / "report.csv"
        report_to_csv(report, path)
        rows = read_report_csv(path)
        assert [r["algorithm"] for r in rows] == ["LSTM", "TCN"]
        assert float(rows[0]["mae_watts"]) == 128.61
        assert rows[0]["duration_minutes"] == "22.43"
        assert rows[0]["best_config"] == "learning_rate=0.001, lstm_size=64"

    def test_text_table_layout(self):
        text = report_to_text(self.demo_report())
        lines = text.splitlines()
        assert lines[1].split() == ["Algorithm", "Window", "MAE", "(W)", "RMSE", "(W)", "Duration", "(min)"]
        assert "LSTM" in lines[3] and "128.61" in lines[3]
        assert "TCN" in lines[4] and "288" in lines[4]

    def test_canonical_config_sorted(self):
        assert canonical_config({"b": 2, "a": 0.5}) == "a=0.5, b=2"

    def test_predictions_csv_round_trip(self, tmp_path):
        cell = self.demo_report().cells[0]
        path = tmp_path / "pred.csv"
        write_predictions_csv(path, cell.targets_watts, cell.predictions_watts,
                              cell.target_timestamps)
        stamps, actual, predicted = read_predictions_csv(path)
        assert stamps[0] == "1970-01-01T00:05:00Z"
        assert np.array_equal(actual, cell.targets_watts)
        assert np.array_equal(predicted, cell.predictions_watts)


class TestPersistence:
    def test_hand_case(self):
        wt = make_windows(series_of([1.0, 2.0, 4.0, 8.0]), 2)
        # previous-bin forecasts: 2 -> 4 (err 2), 4 -> 8 (err 4)
        assert persistence_mae(wt) == 3.0

    def test_scaler_maps_back_to_watts(self):
        series = series_of([0.0, 10.0, 20.0, 30.0, 40.0])
        scaler = Scaler.fit(series)
        scaled = scaler.apply_series(series)
        wt = make_windows(scaled, 2)
        assert persistence_mae(wt, scaler) == pytest.approx(10.0, abs=1e-9)
