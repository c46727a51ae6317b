#!/usr/bin/env python3
"""Clean a raw series and run the full families x windows benchmark.

Thin wrapper over the CLI so the whole protocol is one command:

    python3 scripts/run_benchmark.py --config configs/smoke.json --out runs/smoke

Print the tables (and draw prediction plots) afterwards with:

    wattcast report --run runs/smoke
"""

import argparse
import sys

from wattcast.cli import main as wattcast_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--jobs", type=int, default=None)
    ap.add_argument("--report", action="store_true",
                    help="also render tables and SVG plots afterwards")
    args = ap.parse_args()

    argv = ["benchmark", "--config", args.config, "--out", args.out]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    if args.jobs is not None:
        argv += ["--jobs", str(args.jobs)]
    code = wattcast_main(argv)
    if code == 0 and args.report:
        code = wattcast_main(["report", "--run", args.out])
    return code


if __name__ == "__main__":
    sys.exit(main())
