#!/usr/bin/env python3
"""Generate a synthetic analyser-style series and write it as raw CSV.

Example:
    python3 scripts/make_synthetic.py --days 61 --cadence 300 \
        --noise-sigma 40 --outlier-rate 0.01 --gap-rate 0.002 \
        --seed 0 --out data/synthetic.csv
"""

import argparse
from pathlib import Path

from wattcast.series import SynthConfig, generate_synthetic_with_log, write_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", type=float, default=61.0, help="series length in days")
    ap.add_argument("--cadence", type=int, default=300, help="nominal reading spacing (s)")
    ap.add_argument("--base-load", type=float, default=600.0)
    ap.add_argument("--daily-amplitude", type=float, default=200.0)
    ap.add_argument("--weekly-amplitude", type=float, default=50.0)
    ap.add_argument("--noise-sigma", type=float, default=40.0)
    ap.add_argument("--outlier-rate", type=float, default=0.01)
    ap.add_argument("--gap-rate", type=float, default=0.002)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True, help="destination CSV path")
    args = ap.parse_args()

    cfg = SynthConfig(
        start=0,
        end=int(args.days * 86_400),
        cadence_seconds=args.cadence,
        base_load=args.base_load,
        daily_amplitude=args.daily_amplitude,
        weekly_amplitude=args.weekly_amplitude,
        noise_sigma=args.noise_sigma,
        outlier_rate=args.outlier_rate,
        gap_rate=args.gap_rate,
        seed=args.seed,
    )
    series, log = generate_synthetic_with_log(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(series, out)
    print(
        f"{out}: {len(series)} readings, {len(log.outlier_indices)} outliers, "
        f"{log.gap_count} gaps ({log.dropped_readings} readings dropped)"
    )


if __name__ == "__main__":
    main()
