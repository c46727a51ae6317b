"""Run configuration: JSON file + flag overrides resolved onto defaults.

Precedence is total and simple: flag > config file > built-in default. The
built-in defaults reproduce the reference protocol (cutoff [0, 10000] W,
7-day z-score window with threshold 3, 5-minute bins, context windows
12/288/2016, 10-iteration random search).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .cleaning import AggregationConfig, CutoffConfig, ZScoreConfig
from .dataset import SplitSpec
from .experiment import HyperGrid, MatrixConfig, TrainConfig, grid_axes
from .models import FAMILIES
from .series import SynthConfig, parse_timestamp

ENV_CONFIG = "WATTCAST_CONFIG"

DEFAULTS: dict[str, Any] = {
    "source": {"kind": None, "path": None, "synth": {}},
    "cleaning": {
        "alpha": 0.0,
        "beta": 10_000.0,
        "zscore_window_seconds": 7 * 86_400,
        "omega": 3.0,
        "bin_seconds": 300,
        "aggregation_start": None,  # ISO timestamp; None = first reading
        "aggregation_end": None,  # ISO timestamp; None = after last reading
        "stages": ["cutoff", "zscore", "aggregate"],
    },
    "split": {"train_end": None, "val_end": None},
    "windows": [12, 288, 2016],
    "families": list(FAMILIES),
    "n_iter": 10,
    "train": {"max_epochs": 100, "patience": 10, "predict_chunk": 256},
    "grids": {},
    "seed": 0,
    "jobs": 1,
    "context_prefix": True,
    "out": None,
}


class ConfigError(ValueError):
    """Invalid, missing, or inconsistent run configuration."""


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    """Nested dict merge; override wins, non-dict values replace wholesale."""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config_file(path: str | Path | None) -> dict[str, Any]:
    """Read a JSON config; fall back to $WATTCAST_CONFIG; else empty."""
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}; expected {sorted(DEFAULTS)}")
    return raw


def resolve(file_config: Mapping[str, Any], flag_overrides: Mapping[str, Any]) -> dict[str, Any]:
    """defaults <- config file <- flags."""
    return deep_merge(deep_merge(DEFAULTS, file_config), flag_overrides)


def _epoch_or_none(value: Any, where: str) -> int | None:
    if value is None:
        return None
    if isinstance(value, int):
        return value
    try:
        return parse_timestamp(str(value))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    """Fully-resolved, typed view of one run's settings."""

    source_kind: str | None  # "csv" | "synthetic" | None
    source_path: Path | None
    synth: SynthConfig | None
    cutoff: CutoffConfig
    zscore: ZScoreConfig
    bin_seconds: int
    aggregation_start: int | None
    aggregation_end: int | None
    stages: tuple[str, ...]
    split: SplitSpec | None
    windows: tuple[int, ...]
    families: tuple[str, ...]
    n_iter: int
    train: TrainConfig
    grids: Mapping[str, HyperGrid]
    seed: int
    jobs: int
    context_prefix: bool
    out_dir: Path | None
    raw: Mapping[str, Any] = field(repr=False, default_factory=dict)

    def require(self, *keys: str) -> None:
        """Fail with a defaults-vs-required listing when settings are absent."""
        present = {
            "source": self.source_kind is not None,
            "split": self.split is not None,
            "out": self.out_dir is not None,
        }
        missing = [k for k in keys if not present.get(k, True)]
        if missing:
            defaulted = sorted(set(DEFAULTS) - set(self.raw) - set(missing))
            raise ConfigError(
                f"missing required config keys: {missing} (no defaults exist); "
                f"defaults applied for: {defaulted}"
            )

    def matrix_config(self) -> MatrixConfig:
        self.require("split")
        assert self.split is not None
        return MatrixConfig(
            split=self.split,
            families=self.families,
            windows=self.windows,
            n_iter=self.n_iter,
            master_seed=self.seed,
            train=self.train,
            context_prefix=self.context_prefix,
            jobs=self.jobs,
            grids=self.grids,
        )

    def aggregation_for(self, first_epoch: int, last_epoch: int) -> AggregationConfig:
        """Explicit bin range when configured, else cover the data."""
        start = self.aggregation_start if self.aggregation_start is not None else first_epoch
        end = self.aggregation_end if self.aggregation_end is not None else last_epoch + 1
        return AggregationConfig(self.bin_seconds, start, end)


def _build_synth(raw: Mapping[str, Any]) -> SynthConfig | None:
    if not raw:
        return None
    raw = dict(raw)
    for key in ("start", "end"):
        if key in raw:
            raw[key] = _epoch_or_none(raw[key], f"source.synth.{key}")
    if "gap_length_range" in raw:
        raw["gap_length_range"] = tuple(raw["gap_length_range"])
    try:
        return SynthConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"source.synth: {exc}") from exc


def _build_grids(raw: Mapping[str, Any]) -> dict[str, HyperGrid]:
    """Per-family axis overrides merged onto the default grids."""
    grids = {}
    for family, axes in raw.items():
        if family not in FAMILIES:
            raise ConfigError(f"grids: unknown family {family!r}")
        base = grid_axes(family)
        for name, values in axes.items():
            if name not in base:
                raise ConfigError(f"grids.{family}: unknown axis {name!r} (has {sorted(base)})")
            base[name] = tuple(values)
        grids[family] = HyperGrid(base)
    return grids


def build_run_config(resolved: Mapping[str, Any], raw_file: Mapping[str, Any] | None = None) -> RunConfig:
    """Validate the merged mapping into typed config objects."""
    try:
        source = resolved["source"]
        kind = source.get("kind")
        if kind not in (None, "csv", "synthetic"):
            raise ConfigError(f"source.kind must be csv or synthetic, got {kind!r}")
        cleaning = resolved["cleaning"]
        stages = tuple(cleaning["stages"])
        bad = [s for s in stages if s not in ("cutoff", "zscore", "aggregate")]
        if bad:
            raise ConfigError(f"cleaning.stages: unknown stages {bad}")
        split_raw = resolved["split"]
        train_end = _epoch_or_none(split_raw.get("train_end"), "split.train_end")
        val_end = _epoch_or_none(split_raw.get("val_end"), "split.val_end")
        if (train_end is None) != (val_end is None):
            raise ConfigError("split needs both train_end and val_end")
        families = tuple(resolved["families"])
        unknown = [f for f in families if f not in FAMILIES]
        if unknown:
            raise ConfigError(f"families: unknown {unknown}, expected subset of {FAMILIES}")
        train_raw = resolved["train"]
        path_raw = source.get("path")
        if isinstance(path_raw, (list, tuple)):
            path_raw = path_raw[0] if path_raw else None
        config = RunConfig(
            source_kind=kind,
            source_path=Path(path_raw) if path_raw else None,
            synth=_build_synth(source.get("synth") or {}),
            cutoff=CutoffConfig(float(cleaning["alpha"]), float(cleaning["beta"])),
            zscore=ZScoreConfig(int(cleaning["zscore_window_seconds"]), float(cleaning["omega"])),
            bin_seconds=int(cleaning["bin_seconds"]),
            aggregation_start=_epoch_or_none(
                cleaning["aggregation_start"], "cleaning.aggregation_start"
            ),
            aggregation_end=_epoch_or_none(
                cleaning["aggregation_end"], "cleaning.aggregation_end"
            ),
            stages=stages,
            split=SplitSpec(train_end, val_end) if train_end is not None else None,
            windows=tuple(int(w) for w in resolved["windows"]),
            families=families,
            n_iter=int(resolved["n_iter"]),
            train=TrainConfig(
                max_epochs=int(train_raw["max_epochs"]),
                patience=int(train_raw["patience"]),
                predict_chunk=int(train_raw.get("predict_chunk", 256)),
            ),
            grids=_build_grids(resolved["grids"]),
            seed=int(resolved["seed"]),
            jobs=int(resolved["jobs"]),
            context_prefix=bool(resolved["context_prefix"]),
            out_dir=Path(resolved["out"]) if resolved.get("out") else None,
            raw=dict(raw_file or {}),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if config.source_kind == "csv" and config.source_path is None:
        raise ConfigError("source.kind=csv requires source.path")
    if config.source_kind == "synthetic" and config.synth is None:
        raise ConfigError("source.kind=synthetic requires a source.synth block")
    return config


__all__ = [
    "ConfigError",
    "DEFAULTS",
    "ENV_CONFIG",
    "RunConfig",
    "build_run_config",
    "deep_merge",
    "load_config_file",
    "resolve",
]
