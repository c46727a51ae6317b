"""Chronological splitting, train-fitted min-max scaling, and windowing.

Supervised framing is one-step-ahead: the n_timesteps values preceding a bin
predict that bin. Windows are built per split after splitting; an optional
context prefix stitches the last n_timesteps values of the preceding split in
front of val/test so no target is lost at the boundary.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .series import TimeSeries, to_epoch


class DegenerateScalerError(ValueError):
    """Raised when the training split has no value spread to normalize by."""


@dataclass(frozen=True)
class SplitSpec:
    """Two chronological boundaries; test runs to the series end."""

    train_end: int  # epoch seconds (see series.to_epoch)
    val_end: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "train_end", to_epoch(self.train_end))
        object.__setattr__(self, "val_end", to_epoch(self.val_end))
        if self.train_end >= self.val_end:
            raise ValueError("train_end must precede val_end")


def split(
    series: TimeSeries, spec: SplitSpec
) -> tuple[TimeSeries, TimeSeries, TimeSeries]:
    """Cut into train < train_end <= val < val_end <= test.

    The three segments are contiguous, non-overlapping, and concatenate back
    to the input.
    """
    if len(series) == 0:
        raise ValueError("cannot split an empty series")
    first, last = int(series.timestamps[0]), int(series.timestamps[-1])
    if not (first < spec.train_end and spec.val_end < last):
        raise ValueError(
            f"split boundaries ({spec.train_end}, {spec.val_end}) must lie strictly "
            f"inside the series range ({first}, {last})"
        )
    i = int(np.searchsorted(series.timestamps, spec.train_end, side="left"))
    j = int(np.searchsorted(series.timestamps, spec.val_end, side="left"))
    ts, vals = series.timestamps, series.values
    return (
        TimeSeries(ts[:i], vals[:i], series.source),
        TimeSeries(ts[i:j], vals[i:j], series.source),
        TimeSeries(ts[j:], vals[j:], series.source),
    )


@dataclass(frozen=True)
class Scaler:
    """Min-max transform fitted on the training split only."""

    min: float
    max: float

    def __post_init__(self) -> None:
        if not self.min < self.max:
            raise DegenerateScalerError(
                f"scaler needs min < max, got [{self.min}, {self.max}]"
            )

    @staticmethod
    def fit(train: TimeSeries) -> "Scaler":
        if len(train) == 0:
            raise DegenerateScalerError("cannot fit a scaler on an empty series")
        lo, hi = float(train.values.min()), float(train.values.max())
        if lo == hi:
            raise DegenerateScalerError(f"constant training series (all {lo})")
        return Scaler(lo, hi)

    def apply(self, values: np.ndarray | float) -> np.ndarray | float:
        return (values - self.min) / (self.max - self.min)

    def invert(self, values: np.ndarray | float) -> np.ndarray | float:
        return values * (self.max - self.min) + self.min

    def apply_series(self, series: TimeSeries) -> TimeSeries:
        return series.with_values(self.apply(series.values))

    def to_dict(self) -> dict:
        return {"min": self.min, "max": self.max}

    @staticmethod
    def from_dict(d: dict) -> "Scaler":
        return Scaler(float(d["min"]), float(d["max"]))


@dataclass(frozen=True)
class WindowTensor:
    """Supervised one-step-ahead dataset.

    inputs has shape (n_samples, n_timesteps, 1); targets[i] is the value
    immediately following inputs[i] in time. target_timestamps aligns each
    target with its bin edge (kept for reporting; not part of the binary
    format).
    """

    inputs: np.ndarray
    targets: np.ndarray
    target_timestamps: np.ndarray | None = None

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if inputs.ndim != 3 or inputs.shape[2] != 1:
            raise ValueError(f"inputs must have shape (n, t, 1), got {inputs.shape}")
        if targets.shape != (inputs.shape[0],):
            raise ValueError(
                f"targets must have shape ({inputs.shape[0]},), got {targets.shape}"
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        if self.target_timestamps is not None:
            ts = np.asarray(self.target_timestamps, dtype=np.int64)
            if ts.shape != targets.shape:
                raise ValueError("target_timestamps must align with targets")
            object.__setattr__(self, "target_timestamps", ts)

    @property
    def n_samples(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def n_timesteps(self) -> int:
        return int(self.inputs.shape[1])


def make_windows(series: TimeSeries, n_timesteps: int) -> WindowTensor:
    """Slide a length-n_timesteps window over the series.

    inputs[i][j] = series[i + j], targets[i] = series[i + n_timesteps], so
    n_samples = len(series) - n_timesteps.
    """
    if n_timesteps < 1:
        raise ValueError("n_timesteps must be >= 1")
    if len(series) <= n_timesteps:
        raise ValueError(
            f"series of length {len(series)} is too short for "
            f"n_timesteps={n_timesteps} (needs at least {n_timesteps + 1})"
        )
    windows = np.lib.stride_tricks.sliding_window_view(series.values, n_timesteps)
    inputs = windows[:-1].reshape(-1, n_timesteps, 1).copy()
    targets = series.values[n_timesteps:].copy()
    return WindowTensor(inputs, targets, series.timestamps[n_timesteps:].copy())


def windows_for_splits(
    train: TimeSeries,
    val: TimeSeries,
    test: TimeSeries,
    n_timesteps: int,
    context_prefix: bool = True,
) -> tuple[WindowTensor, WindowTensor, WindowTensor]:
    """Window each split independently.

    With context_prefix (default), val and test windows may reach back into
    the values immediately preceding their split, so every element of the
    split becomes a target. Without it, each split loses its first
    n_timesteps elements as targets.
    """
    out = []
    history: TimeSeries | None = None
    for part in (train, val, test):
        if history is None or not context_prefix:
            out.append(make_windows(part, n_timesteps))
        else:
            # prefix length never exceeds n_timesteps, so every window target
            # produced here belongs to this split
            k = min(n_timesteps, len(history))
            stitched = TimeSeries(
                np.concatenate([history.timestamps[len(history) - k :], part.timestamps]),
                np.concatenate([history.values[len(history) - k :], part.values]),
                part.source,
            )
            out.append(make_windows(stitched, n_timesteps))
        if history is None:
            history = part
        else:
            history = TimeSeries(
                np.concatenate([history.timestamps, part.timestamps]),
                np.concatenate([history.values, part.values]),
                part.source,
            )
    return out[0], out[1], out[2]


# --- flat binary tensor cache -------------------------------------------
# header: three little-endian int64 dimensions; body: row-major float64

def write_tensor(path: str | Path, array: np.ndarray) -> None:
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"binary tensor format is 3-D only, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<3q", *arr.shape))
        fh.write(np.ascontiguousarray(arr).astype("<f8").tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(24)
        if len(header) != 24:
            raise ValueError(f"{path}: truncated tensor header")
        shape = struct.unpack("<3q", header)
        if any(d < 0 for d in shape):
            raise ValueError(f"{path}: invalid shape {shape}")
        count = int(np.prod(shape))
        body = fh.read()
    data = np.frombuffer(body, dtype="<f8")
    if data.size != count:
        raise ValueError(f"{path}: expected {count} values, found {data.size}")
    return data.reshape(shape).astype(np.float64)


def _sibling(base: Path, suffix: str) -> Path:
    return base.parent / (base.name + suffix)


def save_window_tensor(base: str | Path, tensor: WindowTensor) -> None:
    base = Path(base)
    write_tensor(_sibling(base, ".inputs.bin"), tensor.inputs)
    write_tensor(_sibling(base, ".targets.bin"), tensor.targets.reshape(-1, 1, 1))
    if tensor.target_timestamps is not None:
        # epoch seconds are well below 2**53, exact as float64
        write_tensor(
            _sibling(base, ".target_ts.bin"),
            tensor.target_timestamps.astype(np.float64).reshape(-1, 1, 1),
        )


def load_window_tensor(base: str | Path) -> WindowTensor:
    base = Path(base)
    inputs = read_tensor(_sibling(base, ".inputs.bin"))
    targets = read_tensor(_sibling(base, ".targets.bin")).reshape(-1)
    ts_path = _sibling(base, ".target_ts.bin")
    ts = None
    if ts_path.exists():
        ts = read_tensor(ts_path).reshape(-1).astype(np.int64)
    return WindowTensor(inputs, targets, ts)
