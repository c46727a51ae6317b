"""wattcast: short-term instant energy-consumption forecasting.

Raw analyser readings (Watts) go through cutoff clamping, rolling z-score
substitution, and time-bin aggregation; the cleaned series is split
chronologically, min-max scaled, and windowed into one-step-ahead samples;
LSTM / CNN / CNN-LSTM / TCN forecasters built on a small reverse-mode
autodiff engine are tuned by random search and scored by MAE / RMSE in Watts.
"""

__version__ = "0.1.0"

from .cleaning import (
    AggregationConfig,
    CutoffConfig,
    ZScoreConfig,
    aggregate,
    clean_pipeline,
    cutoff_filter,
    zscore_substitute,
)
from .dataset import (
    Scaler,
    SplitSpec,
    WindowTensor,
    make_windows,
    split,
    windows_for_splits,
)
from .experiment import (
    EvalReport,
    HyperGrid,
    MatrixConfig,
    SearchResult,
    TrainConfig,
    default_grid,
    mae,
    random_search,
    rmse,
    run_matrix,
    train,
)
from .models import FAMILIES, ModelSpec, Forecaster, build
from .series import (
    Measurement,
    SynthConfig,
    TimeSeries,
    generate_synthetic,
    read_csv,
    write_csv,
)

__all__ = [
    "__version__",
    "AggregationConfig",
    "CutoffConfig",
    "ZScoreConfig",
    "aggregate",
    "clean_pipeline",
    "cutoff_filter",
    "zscore_substitute",
    "Scaler",
    "SplitSpec",
    "WindowTensor",
    "make_windows",
    "split",
    "windows_for_splits",
    "EvalReport",
    "HyperGrid",
    "MatrixConfig",
    "SearchResult",
    "TrainConfig",
    "default_grid",
    "mae",
    "random_search",
    "rmse",
    "run_matrix",
    "train",
    "FAMILIES",
    "ModelSpec",
    "Forecaster",
    "build",
    "Measurement",
    "SynthConfig",
    "TimeSeries",
    "generate_synthetic",
    "read_csv",
    "write_csv",
]
