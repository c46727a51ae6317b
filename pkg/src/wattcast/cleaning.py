"""Three-stage consistency pipeline for raw power readings.

Stage order is fixed: clamp impossible values, substitute rolling z-score
outliers, then aggregate into equally spaced bins. Each stage is a pure
function from series to series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .series import TimeSeries, to_epoch


@dataclass(frozen=True)
class CutoffConfig:
    """Clamp readings to the physically plausible band [alpha, beta] Watts."""

    alpha: float = 0.0
    beta: float = 10_000.0

    def __post_init__(self) -> None:
        if self.alpha > self.beta:
            raise ValueError("alpha must be <= beta")


@dataclass(frozen=True)
class ZScoreConfig:
    """Rolling z-score substitution over a trailing time window.

    window_seconds is the span of lagged readings entering the statistics;
    omega is the (one-sided, upward) z-score threshold.
    """

    window_seconds: int = 7 * 86_400
    omega: float = 3.0

    def __post_init__(self) -> None:
        if self.window_seconds <= 0:
            raise ValueError("window_seconds must be positive")
        if self.omega <= 0:
            raise ValueError("omega must be positive")


@dataclass(frozen=True)
class AggregationConfig:
    """Sum readings into fixed bins of bin_seconds between start and end."""

    bin_seconds: int = 300
    start: int = 0  # epoch seconds (see series.to_epoch)
    end: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", to_epoch(self.start))
        object.__setattr__(self, "end", to_epoch(self.end))
        if self.bin_seconds <= 0:
            raise ValueError("bin_seconds must be positive")
        if self.start >= self.end:
            raise ValueError("start must precede end")

    @property
    def n_bins(self) -> int:
        return -((self.end - self.start) // -self.bin_seconds)  # ceil division


def cutoff_filter(series: TimeSeries, cfg: CutoffConfig) -> TimeSeries:
    """Clamp every value into [alpha, beta]; timestamps untouched."""
    if len(series) == 0:
        return series
    return series.with_values(np.clip(series.values, cfg.alpha, cfg.beta))


def zscore_substitute(series: TimeSeries, cfg: ZScoreConfig) -> TimeSeries:
    """Replace upward outliers with the mean of their trailing window.

    Scans in timestamp order. For each reading x, the window holds the
    already-cleaned values in [t_x - w, t_x); substitutions feed forward into
    later windows. A reading is replaced by the window mean when the window
    has n >= 2 values, a nonzero population standard deviation, and
    (x - mean) / std > omega. Only upward excursions are replaced.
    """
    n = len(series)
    if n == 0:
        return series
    ts = series.timestamps
    out = series.values.copy()
    lo = 0
    for i in range(1, n):
        cut = ts[i] - cfg.window_seconds
        while ts[lo] < cut:
            lo += 1
        if i - lo < 2:
            continue
        window = out[lo:i]
        sigma = float(np.std(window))
        if sigma == 0.0:
            continue
        mu = float(np.mean(window))
        if (out[i] - mu) / sigma > cfg.omega:
            out[i] = mu
    return series.with_values(out)


def aggregate(series: TimeSeries, cfg: AggregationConfig) -> TimeSeries:
    """Sum readings into [start + k*t, start + (k+1)*t) bins.

    Each bin is emitted at its right edge; bins with no readings emit 0.
    Output length depends only on the config, never on the input, and
    consecutive output timestamps are exactly bin_seconds apart.
    """
    n_bins = cfg.n_bins
    edges = cfg.start + cfg.bin_seconds * np.arange(n_bins + 1, dtype=np.int64)
    values = np.zeros(n_bins, dtype=np.float64)
    if len(series) > 0:
        # contiguous index ranges per bin; per-bin np.sum keeps the reduction
        # order identical to summing the readings in timestamp order
        bounds = np.searchsorted(series.timestamps, edges, side="left")
        for k in range(n_bins):
            a, b = bounds[k], bounds[k + 1]
            if b > a:
                values[k] = np.sum(series.values[a:b])
    return TimeSeries(edges[1:], values, source=series.source)


def clean_pipeline(
    series: TimeSeries,
    cutoff: CutoffConfig,
    zscore: ZScoreConfig,
    agg: AggregationConfig,
) -> TimeSeries:
    """cutoff -> z-score substitution -> aggregation, in that order."""
    return aggregate(zscore_substitute(cutoff_filter(series, cutoff), zscore), agg)
