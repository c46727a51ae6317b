"""Training loop, random-search tuning, Watts-scale metrics, and the
algorithm x window benchmark matrix with its CSV / text reports."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import engine as ng
from .dataset import Scaler, SplitSpec, WindowTensor, split, windows_for_splits
from .engine import Tensor
from .models import FAMILIES, ModelSpec, Forecaster, build, strip_training_params
from .series import TimeSeries, format_timestamp

LEARNING_RATES = (1e-4, 1e-3, 1e-2)
BATCH_SIZES = (32, 64, 256)


# --- metrics ---------------------------------------------------------------


def _paired(y: np.ndarray, y_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.ndim != 1 or y_hat.ndim != 1:
        raise ValueError("metric inputs must be 1-D vectors")
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape[0]} targets vs {y_hat.shape[0]} predictions")
    if y.shape[0] == 0:
        raise ValueError("metrics need at least one pair")
    return y, y_hat


def mae(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Mean absolute error, in the units of the inputs (Watts after inversion)."""
    y, y_hat = _paired(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Root mean squared error, same units as the inputs."""
    y, y_hat = _paired(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


# --- hyperparameter grids --------------------------------------------------


@dataclass(frozen=True)
class HyperGrid:
    """Ordered hyperparameter name -> candidate tuple; flat-indexable."""

    axes: Mapping[str, tuple]

    def __post_init__(self) -> None:
        if not self.axes:
            raise ValueError("grid needs at least one axis")
        fixed = {}
        for name, values in self.axes.items():
            values = tuple(values)
            if not values:
                raise ValueError(f"grid axis {name!r} is empty")
            fixed[name] = values
        object.__setattr__(self, "axes", fixed)

    @property
    def size(self) -> int:
        return math.prod(len(v) for v in self.axes.values())

    def decode(self, flat: int) -> dict[str, Any]:
        """Mixed-radix decode, last axis fastest (C order)."""
        if not 0 <= flat < self.size:
            raise ValueError(f"flat index {flat} outside grid of size {self.size}")
        out = {}
        for name, values in reversed(self.axes.items()):
            flat, pos = divmod(flat, len(values))
            out[name] = values[pos]
        return {name: out[name] for name in self.axes}

    def encode(self, config: Mapping[str, Any]) -> int:
        flat = 0
        for name, values in self.axes.items():
            flat = flat * len(values) + values.index(config[name])
        return flat


_DEFAULT_AXES = {
    "LSTM": {
        "dropout_rate": (0.1, 0.2, 0.3),
        "lstm_layers": (2, 3, 4),
        "lstm_size": (64, 128, 256),
        "mlp_size": (32, 64),
        "learning_rate": LEARNING_RATES,
        "batch_size": BATCH_SIZES,
    },
    "CNN": {
        "conv_blocks": (2, 3),
        "filters": (32, 64, 128),
        "kernel_size": (3, 5),
        "mlp_size": (32, 64),
        "learning_rate": LEARNING_RATES,
        "batch_size": BATCH_SIZES,
    },
    "CNN_LSTM": {
        "filters": (32, 64),
        "kernel_size": (3, 5),
        "lstm_layers": (1, 2),
        "lstm_size": (64, 128),
        "learning_rate": LEARNING_RATES,
        "batch_size": BATCH_SIZES,
    },
    "TCN": {
        "channels": (32, 64),
        "kernel_size": (3, 5),
        "dropout_rate": (0.1, 0.2, 0.3),
        "learning_rate": LEARNING_RATES,
        "batch_size": BATCH_SIZES,
    },
}


def default_grid(family: str) -> HyperGrid:
    return HyperGrid(grid_axes(family))


def grid_axes(family: str) -> dict[str, tuple]:
    """Copy of a family's default axes, e.g. for partial overrides."""
    if family not in _DEFAULT_AXES:
        raise ValueError(f"no default grid for family {family!r}")
    return dict(_DEFAULT_AXES[family])


@dataclass(frozen=True)
class TrialConfig:
    """One sampled grid point plus the seed that trains it."""

    index: int
    flat_index: int
    params: Mapping[str, Any]
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", dict(self.params))


def sample_configs(grid: HyperGrid, n_iter: int, master_seed: int) -> list[TrialConfig]:
    """Uniform sampling without replacement; collisions redrawn.

    Trial i trains under seed master_seed XOR i.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    if n_iter > grid.size:
        raise ValueError(f"n_iter={n_iter} exceeds grid size {grid.size}")
    rng = np.random.Generator(np.random.PCG64(master_seed))
    chosen: list[int] = []
    seen: set[int] = set()
    while len(chosen) < n_iter:
        flat = int(rng.integers(grid.size))
        if flat in seen:
            continue
        seen.add(flat)
        chosen.append(flat)
    return [
        TrialConfig(i, flat, grid.decode(flat), master_seed ^ i)
        for i, flat in enumerate(chosen)
    ]


# --- training loop ---------------------------------------------------------


class TrialDiverged(RuntimeError):
    """Training hit a non-finite loss or validation score."""


@dataclass(frozen=True)
class TrainConfig:
    """Loop schedule; the loss is always MSE on the normalized scale."""

    max_epochs: int = 100
    patience: int = 10
    loss: str = "mse"
    seed: int = 0
    predict_chunk: int = 256

    def __post_init__(self) -> None:
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not 1 <= self.patience <= self.max_epochs:
            raise ValueError("patience must be in [1, max_epochs]")
        if self.loss != "mse":
            raise ValueError(f"only mse loss is supported, got {self.loss!r}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_mse: float
    val_mse: float
    val_mae: float


@dataclass(frozen=True)
class TrainResult:
    best_epoch: int
    epochs_run: int
    best_val_mse: float
    best_val_mae: float
    history: tuple[EpochStats, ...]

    @property
    def best_val_rmse(self) -> float:
        return math.sqrt(self.best_val_mse)


def train(
    model: Forecaster,
    train_data: WindowTensor,
    val_data: WindowTensor,
    cfg: TrainConfig,
    learning_rate: float,
    batch_size: int,
) -> TrainResult:
    """Mini-batch Adam on MSE with early stopping on validation MSE.

    The model is left holding the parameters of its best validation epoch.
    """
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if train_data.n_samples < 1 or val_data.n_samples < 1:
        raise ValueError("train and validation sets must be non-empty")

    params = model.parameters()
    optimizer = ng.Adam(params, lr=learning_rate)
    shuffler = np.random.default_rng(cfg.seed)
    n = train_data.n_samples

    best_state = model.state_arrays()
    best = (math.inf, math.inf)  # (val_mse, val_mae)
    best_epoch = 0
    stall = 0
    history: list[EpochStats] = []
    epoch = 0

    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = shuffler.permutation(n)
        sse = 0.0
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            pred = model.forward(train_data.inputs[batch])
            try:
                loss = ng.mse_loss(pred, Tensor(train_data.targets[batch]))
            except ng.EngineError as exc:
                raise TrialDiverged(f"epoch {epoch}: {exc}") from exc
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                raise TrialDiverged(f"epoch {epoch}: loss {loss_value}")
            optimizer.zero_grad()
            ng.backward(loss, params)
            optimizer.step()
            sse += loss_value * len(batch)

        model.eval()
        val_pred = model.predict(val_data.inputs, chunk=cfg.predict_chunk)
        diff = val_data.targets - val_pred
        val_mse = float(np.mean(diff * diff))
        if not math.isfinite(val_mse):
            raise TrialDiverged(f"epoch {epoch}: validation MSE {val_mse}")
        val_mae = float(np.mean(np.abs(diff)))
        history.append(EpochStats(epoch, sse / n, val_mse, val_mae))

        if val_mse < best[0]:
            best = (val_mse, val_mae)
            best_state = model.state_arrays()
            best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break

    model.load_state_arrays(best_state)
    model.eval()
    return TrainResult(best_epoch, epoch, best[0], best[1], tuple(history))


# --- random search ---------------------------------------------------------


class SearchError(RuntimeError):
    """No trial produced a finite validation score."""


@dataclass(frozen=True)
class TrialOutcome:
    config: TrialConfig
    val_mae: float
    val_rmse: float
    best_epoch: int
    epochs_run: int
    error: str | None = None

    @property
    def sort_key(self) -> tuple[float, float, int]:
        return (self.val_mae, self.val_rmse, self.config.index)


@dataclass(frozen=True)
class SearchResult:
    family: str
    n_timesteps: int
    trials: tuple[TrialOutcome, ...]
    best: TrialOutcome
    best_state: Mapping[str, np.ndarray]

    @property
    def best_spec(self) -> ModelSpec:
        return ModelSpec(
            self.family,
            self.n_timesteps,
            self.best.config.seed,
            strip_training_params(self.best.config.params),
        )

    def build_best(self) -> Forecaster:
        model = build(self.best_spec)
        model.load_state_arrays(self.best_state)
        return model.eval()


def _run_trial(
    family: str,
    n_timesteps: int,
    trial: TrialConfig,
    train_data: WindowTensor,
    val_data: WindowTensor,
    cfg: TrainConfig,
) -> tuple[TrialOutcome, dict[str, np.ndarray] | None]:
    spec = ModelSpec(family, n_timesteps, trial.seed, strip_training_params(trial.params))
    model = build(spec)
    try:
        result = train(
            model,
            train_data,
            val_data,
            TrainConfig(cfg.max_epochs, cfg.patience, cfg.loss, trial.seed, cfg.predict_chunk),
            learning_rate=trial.params["learning_rate"],
            batch_size=trial.params["batch_size"],
        )
    except TrialDiverged as exc:
        return TrialOutcome(trial, math.inf, math.inf, 0, 0, str(exc)), None
    outcome = TrialOutcome(
        trial,
        result.best_val_mae,
        result.best_val_rmse,
        result.best_epoch,
        result.epochs_run,
    )
    return outcome, model.state_arrays()


def random_search(
    family: str,
    n_timesteps: int,
    train_data: WindowTensor,
    val_data: WindowTensor,
    grid: HyperGrid | None = None,
    n_iter: int = 10,
    master_seed: int = 0,
    train_cfg: TrainConfig = TrainConfig(),
    jobs: int = 1,
) -> SearchResult:
    """Train n_iter sampled configurations; pick the lowest validation MAE,
    breaking ties by validation RMSE, then by earlier trial index."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    grid = grid if grid is not None else default_grid(family)
    trials = sample_configs(grid, n_iter, master_seed)

    outcomes: list[TrialOutcome] = []
    best_outcome: TrialOutcome | None = None
    best_state: dict[str, np.ndarray] | None = None

    if jobs == 1:
        results = (
            _run_trial(family, n_timesteps, t, train_data, val_data, train_cfg)
            for t in trials
        )
    else:
        pool = ProcessPoolExecutor(max_workers=jobs)
        results = pool.map(
            _run_trial,
            [family] * len(trials),
            [n_timesteps] * len(trials),
            trials,
            [train_data] * len(trials),
            [val_data] * len(trials),
            [train_cfg] * len(trials),
        )

    try:
        for outcome, state in results:
            outcomes.append(outcome)
            if state is not None and (
                best_outcome is None or outcome.sort_key < best_outcome.sort_key
            ):
                best_outcome = outcome
                best_state = state
    finally:
        if jobs > 1:
            pool.shutdown()

    if best_outcome is None or not math.isfinite(best_outcome.val_mae):
        detail = "; ".join(o.error or "?" for o in outcomes)
        raise SearchError(f"all {len(outcomes)} trials diverged: {detail}")
    assert best_state is not None
    return SearchResult(family, n_timesteps, tuple(outcomes), best_outcome, best_state)


def canonical_config(params: Mapping[str, Any]) -> str:
    """Sorted key=value rendering used in reports; stable across runs."""
    return ", ".join(f"{k}={params[k]!r}" for k in sorted(params))


# --- benchmark matrix ------------------------------------------------------


@dataclass(frozen=True)
class MatrixConfig:
    """One full protocol run: families x windows over pre-cleaned series."""

    split: SplitSpec
    families: tuple[str, ...] = FAMILIES
    windows: tuple[int, ...] = (12, 288, 2016)
    n_iter: int = 10
    master_seed: int = 0
    train: TrainConfig = TrainConfig()
    context_prefix: bool = True
    jobs: int = 1
    grids: Mapping[str, HyperGrid] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.families:
            raise ValueError("families must be non-empty")
        unknown = [f for f in self.families if f not in FAMILIES]
        if unknown:
            raise ValueError(f"unknown families {unknown}")
        if not self.windows or any(w < 1 for w in self.windows):
            raise ValueError("windows must be positive")
        object.__setattr__(self, "families", tuple(self.families))
        object.__setattr__(self, "windows", tuple(int(w) for w in self.windows))
        object.__setattr__(self, "grids", dict(self.grids))

    def grid_for(self, family: str) -> HyperGrid:
        return self.grids.get(family) or default_grid(family)


@dataclass(frozen=True)
class CellResult:
    """One report row: a family evaluated at one window."""

    algorithm: str
    window: int
    mae_watts: float
    rmse_watts: float
    duration_minutes: float
    best_config: Mapping[str, Any]
    trials: tuple[TrialOutcome, ...] = ()
    target_timestamps: np.ndarray | None = None
    targets_watts: np.ndarray | None = None
    predictions_watts: np.ndarray | None = None
    error: str | None = None


@dataclass(frozen=True)
class EvalReport:
    """All cells for one series, in family-major, window-minor order."""

    series_name: str
    cells: tuple[CellResult, ...]

    def row_tuples(self) -> list[tuple]:
        return [
            (
                c.algorithm,
                c.window,
                c.mae_watts,
                c.rmse_watts,
                c.duration_minutes,
                canonical_config(c.best_config) if c.error is None else f"error: {c.error}",
            )
            for c in self.cells
        ]


def run_cell(
    family: str,
    window: int,
    tensors: tuple[WindowTensor, WindowTensor, WindowTensor],
    scaler: Scaler,
    cfg: MatrixConfig,
) -> CellResult:
    """Tune, reuse the winning trial's trained model, and score the test set.

    The timer spans tuning through metric computation, reported in minutes.
    """
    train_t, val_t, test_t = tensors
    started = time.perf_counter()
    try:
        search = random_search(
            family,
            window,
            train_t,
            val_t,
            grid=cfg.grid_for(family),
            n_iter=cfg.n_iter,
            master_seed=cfg.master_seed,
            train_cfg=cfg.train,
            jobs=cfg.jobs,
        )
        model = search.build_best()
        predictions = scaler.invert(model.predict(test_t.inputs, chunk=cfg.train.predict_chunk))
        targets = scaler.invert(test_t.targets)
        cell_mae = mae(targets, predictions)
        cell_rmse = rmse(targets, predictions)
    except (SearchError, ValueError, ng.EngineError) as exc:
        minutes = (time.perf_counter() - started) / 60.0
        return CellResult(
            family, window, math.nan, math.nan, minutes, {}, (), None, None, None, str(exc)
        )
    minutes = (time.perf_counter() - started) / 60.0
    return CellResult(
        family,
        window,
        cell_mae,
        cell_rmse,
        minutes,
        dict(search.best.config.params),
        search.trials,
        test_t.target_timestamps,
        np.asarray(targets),
        np.asarray(predictions),
    )


def run_matrix(series_by_name: Mapping[str, TimeSeries], cfg: MatrixConfig) -> list[EvalReport]:
    """The full protocol: per series, split/scale once, then every
    (family, window) cell. Cell failures are recorded, not fatal."""
    reports = []
    for name, series in series_by_name.items():
        train_s, val_s, test_s = split(series, cfg.split)
        scaler = Scaler.fit(train_s)
        scaled = tuple(scaler.apply_series(s) for s in (train_s, val_s, test_s))
        cells = []
        for family in cfg.families:
            for window in cfg.windows:
                try:
                    tensors = windows_for_splits(*scaled, window, cfg.context_prefix)
                except ValueError as exc:
                    cells.append(
                        CellResult(
                            family, window, math.nan, math.nan, 0.0,
                            {}, (), None, None, None, str(exc),
                        )
                    )
                    continue
                cells.append(run_cell(family, window, tensors, scaler, cfg))
        reports.append(EvalReport(name, tuple(cells)))
    return reports


# --- report serialization --------------------------------------------------

REPORT_COLUMNS = ("algorithm", "window", "mae_watts", "rmse_watts", "duration_minutes", "best_config")


def _metric_str(x: float) -> str:
    return repr(float(x))


def report_to_csv(report: EvalReport, path: str | Path) -> None:
    """Machine-readable report; full precision (the text table rounds instead)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for algo, window, m, r, minutes, config in report.row_tuples():
            writer.writerow(
                [algo, window, _metric_str(m), _metric_str(r), _metric_str(minutes), config]
            )


def read_report_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected report header {reader.fieldnames}")
        return list(reader)


def report_to_text(report: EvalReport) -> str:
    """Aligned table: Algorithm | Window | MAE (W) | RMSE (W) | Duration (min)."""
    headers = ("Algorithm", "Window", "MAE (W)", "RMSE (W)", "Duration (min)")
    rows = [
        (
            c.algorithm,
            str(c.window),
            f"{c.mae_watts:.2f}",
            f"{c.rmse_watts:.2f}",
            f"{c.duration_minutes:.2f}",
        )
        for c in report.cells
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = [f"Forecasting results for {report.series_name}"]
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))).rstrip())
    return "\n".join(lines) + "\n"


def write_predictions_csv(
    path: str | Path,
    targets_watts: np.ndarray,
    predictions_watts: np.ndarray,
    timestamps: np.ndarray | None = None,
) -> None:
    """Actual vs predicted test traces, one row per test bin."""
    targets_watts, predictions_watts = _paired(targets_watts, predictions_watts)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "actual_watts", "predicted_watts"])
        stamps = (
            [format_timestamp(int(t)) for t in timestamps]
            if timestamps is not None
            else [""] * len(targets_watts)
        )
        for stamp, actual, predicted in zip(stamps, targets_watts, predictions_watts):
            writer.writerow([stamp, repr(float(actual)), repr(float(predicted))])


def read_predictions_csv(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        stamps, actual, predicted = [], [], []
        for row in reader:
            stamps.append(row["timestamp"])
            actual.append(float(row["actual_watts"]))
            predicted.append(float(row["predicted_watts"]))
    return stamps, np.asarray(actual), np.asarray(predicted)


def persistence_mae(test: WindowTensor, scaler: Scaler | None = None) -> float:
    """Naive previous-bin forecast on the test windows, optionally in Watts."""
    previous = test.inputs[:, -1, 0]
    targets = test.targets
    if scaler is not None:
        previous = scaler.invert(previous)
        targets = scaler.invert(targets)
    return mae(targets, previous)
