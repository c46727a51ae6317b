"""Time-series value types, CSV ingestion, and the synthetic data generator.

A series is a strictly time-ordered sequence of instant power readings in
Watts. Timestamps are UTC with second resolution and are stored internally
as int64 epoch seconds so that all window/bin arithmetic is exact.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

CSV_HEADER = "timestamp,value_watts"


class CsvFormatError(ValueError):
    """Raised when a CSV file does not match the expected schema."""


def parse_timestamp(text: str) -> int:
    """Parse an ISO-8601 instant (naive means UTC) to epoch seconds."""
    raw = text.strip()
    if raw.endswith("Z") or raw.endswith("z"):
        raw = raw[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise CsvFormatError(f"invalid timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ"
    )


def to_epoch(instant: datetime | int) -> int:
    """Accept datetimes (naive treated as UTC) or raw epoch seconds."""
    if isinstance(instant, datetime):
        if instant.tzinfo is None:
            instant = instant.replace(tzinfo=timezone.utc)
        return int(instant.timestamp())
    return int(instant)


@dataclass(frozen=True)
class Measurement:
    """A single instant power reading."""

    timestamp: int  # epoch seconds, UTC
    value: float  # Watts

    def __post_init__(self) -> None:
        if not np.isfinite(self.value):
            raise ValueError(f"measurement value must be finite, got {self.value}")


@dataclass(frozen=True)
class TimeSeries:
    """Strictly increasing timestamps paired with finite Watt values."""

    timestamps: np.ndarray  # int64 epoch seconds
    values: np.ndarray  # float64 Watts
    source: str = ""

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if ts.ndim != 1 or vals.ndim != 1 or ts.shape != vals.shape:
            raise ValueError(
                f"timestamps and values must be equal-length 1-D arrays, "
                f"got {ts.shape} and {vals.shape}"
            )
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if vals.size and not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise ValueError(f"non-finite value at index {bad}")
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __getitem__(self, index: int) -> Measurement:
        return Measurement(int(self.timestamps[index]), float(self.values[index]))

    def __iter__(self) -> Iterator[Measurement]:
        for i in range(len(self)):
            yield self[i]

    @property
    def measurements(self) -> list[Measurement]:
        return list(self)

    def __eq__(self, other: object) -> bool:
        """Data equality; `source` is provenance, not identity."""
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return np.array_equal(self.timestamps, other.timestamps) and np.array_equal(
            self.values, other.values
        )

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        return replace(self, values=np.asarray(values, dtype=np.float64))

    @staticmethod
    def from_measurements(
        measurements: Sequence[Measurement], source: str = ""
    ) -> "TimeSeries":
        ts = np.array([m.timestamp for m in measurements], dtype=np.int64)
        vals = np.array([m.value for m in measurements], dtype=np.float64)
        return TimeSeries(ts, vals, source)


def read_csv(path: str | Path, source: str | None = None) -> tuple[TimeSeries, int]:
    """Read a `timestamp,value_watts` CSV into a sorted series.

    Rows may arrive out of order; they are sorted stably, and duplicate
    timestamps are collapsed keeping the first-seen row. Returns the series
    and the number of dropped duplicates so callers can log a warning.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise CsvFormatError(f"{path}: empty file")
    header = lines[0].strip()
    if header != CSV_HEADER:
        raise CsvFormatError(f"{path}: expected header {CSV_HEADER!r}, got {header!r}")
    ts_list: list[int] = []
    val_list: list[float] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise CsvFormatError(f"{path}:{lineno}: expected 2 columns, got {len(parts)}")
        try:
            ts = parse_timestamp(parts[0])
        except CsvFormatError as exc:
            raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
        try:
            value = float(parts[1])
        except ValueError:
            raise CsvFormatError(f"{path}:{lineno}: invalid value {parts[1]!r}") from None
        if not np.isfinite(value):
            raise CsvFormatError(f"{path}:{lineno}: non-finite value {parts[1]!r}")
        ts_list.append(ts)
        val_list.append(value)
    if not ts_list:
        raise CsvFormatError(f"{path}: no data rows")
    ts_arr = np.array(ts_list, dtype=np.int64)
    val_arr = np.array(val_list, dtype=np.float64)
    order = np.argsort(ts_arr, kind="stable")
    ts_arr = ts_arr[order]
    val_arr = val_arr[order]
    # keep-first on duplicate timestamps; stable sort preserves input order
    keep = np.ones(ts_arr.size, dtype=bool)
    keep[1:] = np.diff(ts_arr) > 0
    duplicates = int(ts_arr.size - keep.sum())
    series = TimeSeries(
        ts_arr[keep], val_arr[keep], source if source is not None else path.stem
    )
    return series, duplicates


def write_csv(series: TimeSeries, path: str | Path, decimals: int | None = 6) -> None:
    """Write a series as `timestamp,value_watts`.

    `decimals` fixes the stored precision (default 6); None writes the
    shortest representation that round-trips float64 exactly.
    """
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for ts, value in zip(series.timestamps, series.values):
        if decimals is None:
            rendered = repr(float(value))
        else:
            rendered = f"{value:.{decimals}f}"
        buf.write(f"{format_timestamp(int(ts))},{rendered}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic factory-like load profile: base + daily/weekly cycles + noise,
    with optional outlier injection and reading dropouts."""

    start: int  # epoch seconds (see to_epoch)
    end: int
    cadence_seconds: float = 270.0  # mean spacing between raw readings
    jitter_frac: float = 0.1  # cadence jitter, uniform in +/- frac * cadence
    base_load: float = 500.0
    daily_amplitude: float = 200.0
    weekly_amplitude: float = 100.0
    noise_sigma: float = 40.0
    outlier_rate: float = 0.0
    gap_rate: float = 0.0
    gap_length_range: tuple[int, int] = (5, 50)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", to_epoch(self.start))
        object.__setattr__(self, "end", to_epoch(self.end))
        if self.start >= self.end:
            raise ValueError("start must precede end")
        if self.cadence_seconds <= 0:
            raise ValueError("cadence_seconds must be positive")
        if not 0.0 <= self.jitter_frac < 1.0:
            raise ValueError("jitter_frac must be in [0, 1)")
        for name in ("base_load", "daily_amplitude", "weekly_amplitude", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("outlier_rate", "gap_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        lo, hi = self.gap_length_range
        if not (0 < lo <= hi):
            raise ValueError("gap_length_range must satisfy 0 < min <= max")


@dataclass(frozen=True)
class SynthLog:
    """What the generator injected, for auditing the output series."""

    outlier_indices: tuple[int, ...] = ()
    outlier_kinds: tuple[str, ...] = ()  # "spike" | "negative", aligned with indices
    gap_count: int = 0
    dropped_readings: int = 0


DAY_SECONDS = 86_400
WEEK_SECONDS = 604_800


def generate_synthetic(cfg: SynthConfig) -> TimeSeries:
    series, _ = generate_synthetic_with_log(cfg)
    return series


def generate_synthetic_with_log(cfg: SynthConfig) -> tuple[TimeSeries, SynthLog]:
    """Deterministic synthetic series for a fixed seed.

    Pipeline: jittered timestamp grid -> gap dropouts -> seasonal signal with
    Gaussian noise (clipped at 0) -> outlier injection on surviving readings.
    The log indexes into the returned series.
    """
    rng = np.random.default_rng(cfg.seed)

    # jittered grid; whole seconds, strictly increasing
    n_max = int(np.ceil((cfg.end - cfg.start) / cfg.cadence_seconds)) + 2
    jitter = rng.uniform(-cfg.jitter_frac, cfg.jitter_frac, size=n_max) * cfg.cadence_seconds
    steps = np.maximum(1, np.rint(cfg.cadence_seconds + jitter).astype(np.int64))
    timestamps = cfg.start + np.concatenate(([0], np.cumsum(steps)))
    timestamps = timestamps[timestamps < cfg.end]

    # gap dropouts: each reading may start a contiguous deleted run
    dropped = np.zeros(timestamps.size, dtype=bool)
    gap_count = 0
    if cfg.gap_rate > 0:
        starts = rng.random(timestamps.size) < cfg.gap_rate
        lengths = rng.integers(
            cfg.gap_length_range[0], cfg.gap_length_range[1] + 1, size=timestamps.size
        )
        for i in np.flatnonzero(starts):
            dropped[i : i + lengths[i]] = True
            gap_count += 1
    kept = timestamps[~dropped]
    n_dropped = int(dropped.sum())

    phase = (kept - cfg.start).astype(np.float64)
    signal = (
        cfg.base_load
        + cfg.daily_amplitude * np.sin(2 * np.pi * phase / DAY_SECONDS)
        + cfg.weekly_amplitude * np.sin(2 * np.pi * phase / WEEK_SECONDS)
    )
    if cfg.noise_sigma > 0:
        signal = signal + rng.normal(0.0, cfg.noise_sigma, size=kept.size)
    signal = np.maximum(signal, 0.0)

    outlier_indices: list[int] = []
    outlier_kinds: list[str] = []
    if cfg.outlier_rate > 0:
        hit = rng.random(kept.size) < cfg.outlier_rate
        for i in np.flatnonzero(hit):
            if rng.random() < 0.5:
                factor = rng.uniform(10.0, 100.0)
                signal[i] = max(signal[i], cfg.base_load, 1.0) * factor
                outlier_kinds.append("spike")
            else:
                signal[i] = -rng.uniform(1.0, cfg.base_load + 1.0)
                outlier_kinds.append("negative")
            outlier_indices.append(int(i))

    series = TimeSeries(kept, signal, source=f"synthetic-{cfg.seed}")
    log = SynthLog(
        outlier_indices=tuple(outlier_indices),
        outlier_kinds=tuple(outlier_kinds),
        gap_count=gap_count,
        dropped_readings=n_dropped,
    )
    return series, log
