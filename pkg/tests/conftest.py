import numpy as np
import pytest

from wattcast.series import TimeSeries


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)


def series_of(values, timestamps=None, source="") -> TimeSeries:
    """Shorthand: values with 1-second spacing unless timestamps given."""
    values = np.asarray(values, dtype=np.float64)
    if timestamps is None:
        timestamps = np.arange(len(values), dtype=np.int64)
    return TimeSeries(np.asarray(timestamps, dtype=np.int64), values, source)


def random_series(
    rng: np.random.Generator,
    max_len: int = 500,
    outliers: bool = True,
    gaps: bool = True,
) -> TimeSeries:
    """Messy series: irregular cadence, optional spikes/negatives/flat runs."""
    n = int(rng.integers(2, max_len + 1))
    steps = rng.integers(1, 600, size=n)
    if gaps and n > 10 and rng.random() < 0.5:
        where = rng.integers(1, n, size=max(1, n // 50))
        steps[where] += rng.integers(3_600, 100_000, size=where.size)
    timestamps = np.cumsum(steps).astype(np.int64)
    values = rng.normal(500.0, 150.0, size=n)
    if rng.random() < 0.3:  # flat stretch exercises the sigma == 0 branch
        k = int(rng.integers(2, max(3, n // 3)))
        start = int(rng.integers(0, n - k + 1))
        values[start : start + k] = values[start]
    if outliers:
        n_out = int(rng.integers(0, max(1, n // 20) + 1))
        idx = rng.choice(n, size=min(n_out, n), replace=False)
        for i in idx:
            if rng.random() < 0.5:
                values[i] = abs(values[i]) * rng.uniform(10, 100)
            else:
                values[i] = -rng.uniform(1, 500)
    return TimeSeries(timestamps, values)
