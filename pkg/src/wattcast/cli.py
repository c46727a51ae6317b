"""Command-line surface wiring the pipeline stages together.

Subcommands: synth, clean, prepare, train, tune, evaluate, benchmark, report.
Every run writes a manifest.json (resolved config + seed + versions) beside
its outputs so any stage can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import platform
import sys
import time
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import __version__
from .cleaning import aggregate, cutoff_filter, zscore_substitute
from .config import (
    ConfigError,
    RunConfig,
    build_run_config,
    load_config_file,
    resolve,
)
from .dataset import (
    Scaler,
    load_window_tensor,
    save_window_tensor,
    split,
    windows_for_splits,
)
from .engine import load_checkpoint, save_checkpoint
from .experiment import (
    CellResult,
    EvalReport,
    TrainConfig,
    canonical_config,
    default_grid,
    mae,
    random_search,
    read_predictions_csv,
    read_report_csv,
    report_to_csv,
    report_to_text,
    rmse,
    run_matrix,
    train as train_loop,
    write_predictions_csv,
)
from .models import ModelSpec, build, load_spec, save_spec, strip_training_params
from .series import (
    CsvFormatError,
    TimeSeries,
    format_timestamp,
    generate_synthetic_with_log,
    read_csv,
    write_csv,
)

STAGE_ORDER = ("cutoff", "zscore", "aggregate")


# --- shared plumbing --------------------------------------------------------


def _ensure_out(run: RunConfig) -> Path:
    run.require("out")
    assert run.out_dir is not None
    run.out_dir.mkdir(parents=True, exist_ok=True)
    return run.out_dir


def write_manifest(
    out_dir: Path, command: str, resolved: Mapping[str, Any], extra: Mapping[str, Any] | None = None
) -> Path:
    manifest: dict[str, Any] = {
        "command": command,
        "config": dict(resolved),
        "created_utc": format_timestamp(int(time.time())),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "wattcast": __version__,
        },
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _nest(pairs: Mapping[tuple[str, ...], Any]) -> dict[str, Any]:
    """{(a,b): v} -> {a: {b: v}}, skipping None values (flag not given)."""
    out: dict[str, Any] = {}
    for path, value in pairs.items():
        if value is None:
            continue
        node = out
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value
    return out


def _csv_list(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [part.strip() for part in text.split(",") if part.strip()]


def _int_list(text: str | None) -> list[int] | None:
    parts = _csv_list(text)
    return None if parts is None else [int(p) for p in parts]


def _resolve_run(args: argparse.Namespace, extra_overrides: Mapping[str, Any]) -> tuple[RunConfig, dict]:
    file_cfg = load_config_file(args.config)
    common = _nest(
        {
            ("seed",): args.seed,
            ("jobs",): args.jobs,
            ("out",): args.out,
        }
    )
    resolved = resolve(file_cfg, common)
    if extra_overrides:
        resolved = resolve(resolved, extra_overrides)
    return build_run_config(resolved, file_cfg), resolved


def _load_source_series(run: RunConfig, resolved: Mapping[str, Any]) -> dict[str, TimeSeries]:
    """Named raw series from the configured source (csv path(s) or synthetic)."""
    run.require("source")
    if run.source_kind == "synthetic":
        assert run.synth is not None
        synth = run.synth
        if "seed" not in (resolved["source"].get("synth") or {}):
            synth = dataclasses.replace(synth, seed=run.seed)
        series, _ = generate_synthetic_with_log(synth)
        return {"synthetic": series}
    raw_path = resolved["source"]["path"]
    paths = [raw_path] if isinstance(raw_path, (str, Path)) else list(raw_path)
    out: dict[str, TimeSeries] = {}
    for p in paths:
        series, dropped = read_csv(p)
        name = Path(p).stem
        if name in out:
            raise ConfigError(f"duplicate series name {name!r} from {p}")
        if dropped:
            print(f"{name}: dropped {dropped} duplicate timestamps", file=sys.stderr)
        out[name] = series
    return out


def _apply_stages(series: TimeSeries, run: RunConfig, stages: Sequence[str]) -> TimeSeries:
    for stage in stages:
        if stage == "cutoff":
            series = cutoff_filter(series, run.cutoff)
        elif stage == "zscore":
            series = zscore_substitute(series, run.zscore)
        elif stage == "aggregate":
            first, last = int(series.timestamps[0]), int(series.timestamps[-1])
            series = aggregate(series, run.aggregation_for(first, last))
        else:
            raise ConfigError(f"unknown cleaning stage {stage!r}")
    return series


# --- subcommands ------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    overrides = _nest(
        {
            ("source", "kind"): "synthetic",
            ("source", "synth", "start"): args.start,
            ("source", "synth", "end"): args.end,
            ("source", "synth", "cadence_seconds"): args.cadence_seconds,
            ("source", "synth", "noise_sigma"): args.noise_sigma,
            ("source", "synth", "outlier_rate"): args.outlier_rate,
            ("source", "synth", "gap_rate"): args.gap_rate,
        }
    )
    run, resolved = _resolve_run(args, overrides)
    run.require("source", "out")
    if run.synth is None:
        raise ConfigError(
            "synth needs source.synth.start and source.synth.end "
            "(flags --start/--end or config file)"
        )
    out_dir = _ensure_out(run)
    synth = run.synth
    if "seed" not in (resolved["source"].get("synth") or {}):
        synth = dataclasses.replace(synth, seed=run.seed)
    series, log = generate_synthetic_with_log(synth)
    path = out_dir / "raw.csv"
    write_csv(series, path)
    write_manifest(
        out_dir,
        "synth",
        resolved,
        {
            "rows": len(series),
            "outliers_injected": len(log.outlier_indices),
            "gaps": log.gap_count,
            "readings_dropped_by_gaps": log.dropped_readings,
        },
    )
    print(f"wrote {len(series)} readings to {path}")
    return 0


def cmd_clean(args: argparse.Namespace) -> int:
    overrides = _nest(
        {
            ("source", "kind"): "csv" if args.input else None,
            ("source", "path"): args.input,
            ("cleaning", "alpha"): args.alpha,
            ("cleaning", "beta"): args.beta,
            ("cleaning", "omega"): args.omega,
            ("cleaning", "zscore_window_seconds"): args.zscore_window_seconds,
            ("cleaning", "bin_seconds"): args.bin_seconds,
            ("cleaning", "aggregation_start"): args.aggregation_start,
            ("cleaning", "aggregation_end"): args.aggregation_end,
            ("cleaning", "stages"): _csv_list(args.stages),
        }
    )
    run, resolved = _resolve_run(args, overrides)
    run.require("source", "out")
    out_dir = _ensure_out(run)
    named = _load_source_series(run, resolved)
    total = 0
    for name, series in named.items():
        cleaned = _apply_stages(series, run, run.stages)
        suffix = f"{name}.cleaned.csv" if len(named) > 1 else "cleaned.csv"
        path = out_dir / suffix
        write_csv(cleaned, path)
        print(f"{name}: {len(series)} readings -> {len(cleaned)} rows ({path})")
        total += len(cleaned)
    write_manifest(out_dir, "clean", resolved, {"rows_out": total})
    return 0


def cmd_prepare(args: argparse.Namespace) -> int:
    overrides = _nest(
        {
            ("source", "kind"): "csv" if args.input else None,
            ("source", "path"): args.input,
            ("split", "train_end"): args.train_end,
            ("split", "val_end"): args.val_end,
            ("windows",): _int_list(args.windows),
            ("context_prefix",): args.context_prefix,
        }
    )
    run, resolved = _resolve_run(args, overrides)
    run.require("source", "split", "out")
    assert run.split is not None
    out_dir = _ensure_out(run)
    named = _load_source_series(run, resolved)
    if len(named) != 1:
        raise ConfigError("prepare expects exactly one input series")
    ((name, series),) = named.items()
    train_s, val_s, test_s = split(series, run.split)
    scaler = Scaler.fit(train_s)
    scaled = tuple(scaler.apply_series(s) for s in (train_s, val_s, test_s))
    (out_dir / "scaler.json").write_text(
        json.dumps(scaler.to_dict(), sort_keys=True) + "\n", encoding="utf-8"
    )
    counts: dict[str, dict[str, int]] = {}
    for window in run.windows:
        tensors = windows_for_splits(*scaled, window, run.context_prefix)
        wdir = out_dir / f"w{window}"
        wdir.mkdir(exist_ok=True)
        for split_name, tensor in zip(("train", "val", "test"), tensors):
            save_window_tensor(wdir / split_name, tensor)
        counts[f"w{window}"] = {
            s: t.n_samples for s, t in zip(("train", "val", "test"), tensors)
        }
        print(
            f"w{window}: train={tensors[0].n_samples} "
            f"val={tensors[1].n_samples} test={tensors[2].n_samples}"
        )
    write_manifest(
        out_dir,
        "prepare",
        resolved,
        {"series": name, "splits": {"train": len(train_s), "val": len(val_s), "test": len(test_s)}, "samples": counts},
    )
    return 0


def _load_prepared(data_dir: Path, window: int, names: Sequence[str]):
    wdir = data_dir / f"w{window}"
    if not wdir.is_dir():
        raise ConfigError(f"no prepared tensors for window {window} under {data_dir}")
    return tuple(load_window_tensor(wdir / n) for n in names)


def _load_scaler(data_dir: Path) -> Scaler:
    path = data_dir / "scaler.json"
    if not path.exists():
        raise ConfigError(f"missing {path}")
    return Scaler.from_dict(json.loads(path.read_text(encoding="utf-8")))


def cmd_train(args: argparse.Namespace) -> int:
    run, resolved = _resolve_run(args, {})
    run.require("out")
    out_dir = _ensure_out(run)
    data_dir = Path(args.data)
    family, window = args.family, args.window
    params = dict(default_grid(family).decode(0))
    if args.params:
        params.update(json.loads(args.params))
    if args.learning_rate is not None:
        params["learning_rate"] = args.learning_rate
    if args.batch_size is not None:
        params["batch_size"] = args.batch_size
    train_t, val_t = _load_prepared(data_dir, window, ("train", "val"))
    spec = ModelSpec(family, window, run.seed, strip_training_params(params))
    model = build(spec)
    cfg = TrainConfig(
        max_epochs=run.train.max_epochs,
        patience=run.train.patience,
        seed=run.seed,
        predict_chunk=run.train.predict_chunk,
    )
    result = train_loop(
        model, train_t, val_t, cfg,
        learning_rate=float(params["learning_rate"]),
        batch_size=int(params["batch_size"]),
    )
    save_checkpoint(out_dir / "model.ckpt", model.parameters())
    save_spec(out_dir / "model.spec", spec)
    with open(out_dir / "history.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("epoch,train_mse,val_mse,val_mae\n")
        for h in result.history:
            fh.write(f"{h.epoch},{h.train_mse!r},{h.val_mse!r},{h.val_mae!r}\n")
    write_manifest(
        out_dir, "train", resolved,
        {
            "family": family,
            "window": window,
            "params": params,
            "best_epoch": result.best_epoch,
            "epochs_run": result.epochs_run,
            "best_val_mse": result.best_val_mse,
        },
    )
    print(
        f"{family} w{window}: best epoch {result.best_epoch}/{result.epochs_run}, "
        f"val MSE {result.best_val_mse:.6f}"
    )
    return 0


def cmd_tune(args: argparse.Namespace) -> int:
    overrides = _nest({("n_iter",): args.n_iter})
    run, resolved = _resolve_run(args, overrides)
    run.require("out")
    out_dir = _ensure_out(run)
    family, window = args.family, args.window
    train_t, val_t = _load_prepared(Path(args.data), window, ("train", "val"))
    search = random_search(
        family,
        window,
        train_t,
        val_t,
        grid=run.grids.get(family),
        n_iter=run.n_iter,
        master_seed=run.seed,
        train_cfg=run.train,
        jobs=run.jobs,
    )
    with open(out_dir / "trials.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["trial", "flat_index", "val_mae", "val_rmse", "best_epoch", "epochs_run", "error", "config"]
        )
        for t in search.trials:
            writer.writerow(
                [
                    t.config.index,
                    t.config.flat_index,
                    repr(t.val_mae),
                    repr(t.val_rmse),
                    t.best_epoch,
                    t.epochs_run,
                    t.error or "",
                    canonical_config(t.config.params),
                ]
            )
    model = search.build_best()
    save_checkpoint(out_dir / "model.ckpt", model.parameters())
    save_spec(out_dir / "model.spec", search.best_spec)
    write_manifest(
        out_dir, "tune", resolved,
        {
            "family": family,
            "window": window,
            "best_config": dict(search.best.config.params),
            "best_val_mae": search.best.val_mae,
            "best_val_rmse": search.best.val_rmse,
        },
    )
    print(
        f"{family} w{window}: best trial {search.best.config.index} "
        f"val MAE {search.best.val_mae:.6f} ({canonical_config(search.best.config.params)})"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    run, resolved = _resolve_run(args, {})
    run.require("out")
    out_dir = _ensure_out(run)
    model_dir = Path(args.model)
    data_dir = Path(args.data)
    spec = load_spec(model_dir / "model.spec")
    model = build(spec)
    model.load_state_arrays(load_checkpoint(model_dir / "model.ckpt"))
    scaler = _load_scaler(data_dir)
    (test_t,) = _load_prepared(data_dir, spec.n_timesteps, ("test",))
    predictions = scaler.invert(model.predict(test_t.inputs, chunk=run.train.predict_chunk))
    targets = scaler.invert(test_t.targets)
    m, r = mae(targets, predictions), rmse(targets, predictions)
    with open(out_dir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("algorithm,window,mae_watts,rmse_watts\n")
        fh.write(f"{spec.family},{spec.n_timesteps},{m!r},{r!r}\n")
    write_predictions_csv(
        out_dir / "predictions.csv", targets, predictions, test_t.target_timestamps
    )
    write_manifest(
        out_dir, "evaluate", resolved,
        {"family": spec.family, "window": spec.n_timesteps, "mae_watts": m, "rmse_watts": r},
    )
    print(f"{spec.family} w{spec.n_timesteps}: MAE {m:.2f} W, RMSE {r:.2f} W")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    overrides = _nest(
        {
            ("source", "kind"): "csv" if args.input else None,
            ("source", "path"): args.input if args.input else None,
            ("split", "train_end"): args.train_end,
            ("split", "val_end"): args.val_end,
            ("windows",): _int_list(args.windows),
            ("families",): _csv_list(args.families),
            ("n_iter",): args.n_iter,
            ("train", "max_epochs"): args.max_epochs,
            ("train", "patience"): args.patience,
        }
    )
    run, resolved = _resolve_run(args, overrides)
    run.require("source", "split", "out")
    out_dir = _ensure_out(run)
    raw_series = _load_source_series(run, resolved)
    cleaned = {
        name: _apply_stages(series, run, run.stages) for name, series in raw_series.items()
    }
    reports = run_matrix(cleaned, run.matrix_config())
    failures = 0
    for report in reports:
        sdir = out_dir / report.series_name
        pdir = sdir / "predictions"
        pdir.mkdir(parents=True, exist_ok=True)
        report_to_csv(report, sdir / "report.csv")
        (sdir / "report.txt").write_text(report_to_text(report), encoding="utf-8")
        for cell in report.cells:
            if cell.error is not None:
                failures += 1
                print(
                    f"{report.series_name}/{cell.algorithm} w{cell.window}: {cell.error}",
                    file=sys.stderr,
                )
                continue
            write_predictions_csv(
                pdir / f"{cell.algorithm}_w{cell.window}.csv",
                cell.targets_watts,
                cell.predictions_watts,
                cell.target_timestamps,
            )
        print(report_to_text(report))
    write_manifest(
        out_dir, "benchmark", resolved,
        {
            "series": sorted(cleaned),
            "rows": sum(len(r.cells) for r in reports),
            "failures": failures,
        },
    )
    return 0 if failures == 0 else 1


def _svg_polyline(xs: np.ndarray, ys: np.ndarray, color: str) -> str:
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{points}"/>'


def write_plot_svg(path: Path, title: str, actual: np.ndarray, predicted: np.ndarray) -> None:
    """Actual (blue) vs predicted (orange) polylines; no plotting deps."""
    width, height, pad = 960, 320, 46
    lo = float(min(actual.min(), predicted.min()))
    hi = float(max(actual.max(), predicted.max()))
    span = (hi - lo) or 1.0
    n = len(actual)
    xs = pad + (width - 2 * pad) * np.arange(n) / max(n - 1, 1)

    def to_y(v: np.ndarray) -> np.ndarray:
        return height - pad - (height - 2 * pad) * (v - lo) / span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{title}</text>',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="#999" stroke-width="1"/>',
        f'<text x="4" y="{pad + 10}" font-family="sans-serif" font-size="11">{hi:.6g}</text>',
        f'<text x="4" y="{height - pad}" font-family="sans-serif" font-size="11">{lo:.6g}</text>',
        _svg_polyline(xs, to_y(np.asarray(actual)), "#1f77b4"),
        _svg_polyline(xs, to_y(np.asarray(predicted)), "#ff7f0e"),
        f'<text x="{width - 220}" y="24" font-family="sans-serif" font-size="12" '
        'fill="#1f77b4">actual</text>',
        f'<text x="{width - 150}" y="24" font-family="sans-serif" font-size="12" '
        'fill="#ff7f0e">predicted</text>',
        "</svg>",
    ]
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    report_files = sorted(run_dir.glob("*/report.csv"))
    if not report_files:
        raise ConfigError(f"no */report.csv found under {run_dir}")
    for report_path in report_files:
        sdir = report_path.parent
        rows = read_report_csv(report_path)
        cells = tuple(
            CellResult(
                row["algorithm"],
                int(row["window"]),
                float(row["mae_watts"]),
                float(row["rmse_watts"]),
                float(row["duration_minutes"]),
                {},
            )
            for row in rows
        )
        print(report_to_text(EvalReport(sdir.name, cells)))
        for pred_path in sorted(sdir.glob("predictions/*.csv")):
            _, actual, predicted = read_predictions_csv(pred_path)
            if len(actual) == 0:
                continue
            write_plot_svg(
                pred_path.with_suffix(".svg"),
                f"{sdir.name} {pred_path.stem} — actual vs predicted (W)",
                actual,
                predicted,
            )
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wattcast",
        description="Short-term instant energy consumption forecasting pipeline.",
    )
    parser.add_argument("--version", action="version", version=f"wattcast {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (or $WATTCAST_CONFIG)")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--jobs", type=int, help="parallel trials (default 1)")
    common.add_argument("--out", help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic raw series")
    p.add_argument("--start", help="first reading timestamp (ISO-8601)")
    p.add_argument("--end", help="exclusive end timestamp (ISO-8601)")
    p.add_argument("--cadence-seconds", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--outlier-rate", type=float)
    p.add_argument("--gap-rate", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("clean", parents=[common], help="run cleaning stages on a raw CSV")
    p.add_argument("--input", help="raw series CSV")
    p.add_argument("--stages", help="comma list from cutoff,zscore,aggregate (default all)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--zscore-window-seconds", type=int)
    p.add_argument("--bin-seconds", type=int)
    p.add_argument("--aggregation-start")
    p.add_argument("--aggregation-end")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("prepare", parents=[common], help="split, scale, and window a cleaned CSV")
    p.add_argument("--input", help="cleaned series CSV")
    p.add_argument("--train-end", help="first timestamp after the training split")
    p.add_argument("--val-end", help="first timestamp after the validation split")
    p.add_argument("--windows", help="comma list of context lengths")
    p.add_argument(
        "--context-prefix",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="let val/test windows reach into preceding history (default on)",
    )
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="train one model on prepared tensors")
    p.add_argument("--data", required=True, help="prepare output directory")
    p.add_argument("--family", required=True, choices=["LSTM", "CNN", "CNN_LSTM", "TCN"])
    p.add_argument("--window", required=True, type=int)
    p.add_argument("--params", help="JSON object of hyperparameters")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", parents=[common], help="random-search one family and window")
    p.add_argument("--data", required=True, help="prepare output directory")
    p.add_argument("--family", required=True, choices=["LSTM", "CNN", "CNN_LSTM", "TCN"])
    p.add_argument("--window", required=True, type=int)
    p.add_argument("--n-iter", type=int)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint on the test split")
    p.add_argument("--model", required=True, help="directory with model.ckpt + model.spec")
    p.add_argument("--data", required=True, help="prepare output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", parents=[common], help="full families x windows matrix")
    p.add_argument("--input", action="append", help="raw CSV (repeatable for several series)")
    p.add_argument("--train-end")
    p.add_argument("--val-end")
    p.add_argument("--windows")
    p.add_argument("--families")
    p.add_argument("--n-iter", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", parents=[common], help="print tables and draw SVG plots")
    p.add_argument("--run", required=True, help="benchmark output directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CsvFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
