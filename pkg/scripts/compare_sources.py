"""Rest-medium versus convective propagation of a plane wave on a uniform stream.

For each stream speed the fluctuation system, the convective wave equation
and the rest-medium wave equation are run from the same data.  The table
shows how far the rest-medium solution drifts and the phase it lags by,
next to the convective phase ``-|u0| t`` for the dominant mode.

    python3 scripts/compare_sources.py --n 64 --T 2 --speeds 0.1 0.2 0.3 --csv out.csv
"""
import argparse
import csv

from pathacoustics.acoustics import compare_sources
from pathacoustics.baseflow import BaseFlow
from pathacoustics.fields import Grid
from pathacoustics.scenarios import UniformPlusPlaneWave


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=64)
    parser.add_argument("--T", type=float, default=2.0)
    parser.add_argument("--amplitude", type=float, default=1e-3)
    parser.add_argument("--speeds", type=float, nargs="+", default=[0.1, 0.2, 0.3])
    parser.add_argument("--source", choices=["true_source", "lighthill"], default="true_source")
    parser.add_argument("--csv", help="write one row per speed")
    args = parser.parse_args(argv)

    grid = Grid.square(args.n)
    rows = []
    print(f"{'|u0|':>6} {'|u0| T':>7} {'true vs system':>15} {'rest vs conv':>13} {'phase':>9} {'-|u0| T':>9}")
    for speed in args.speeds:
        prov = UniformPlusPlaneWave(u0=(speed, 0.0), amplitude=args.amplitude)
        cmp = compare_sources(prov, BaseFlow.uniform(grid, (speed, 0.0), prov.c), args.T,
                              lighthill_kind=args.source, store_every=10)
        row = (speed, speed * args.T, float(cmp.l2_true_vs_theorem1.max()), float(cmp.l2_true_vs_lighthill[-1]),
               float(cmp.phase_shift[-1]), -speed * cmp.times[-1])
        rows.append(row)
        print(f"{row[0]:6.2f} {row[1]:7.2f} {row[2]:15.2e} {row[3]:13.2e} {row[4]:9.4f} {row[5]:9.4f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["speed", "speed_T", "l2_true_vs_system", "l2_rest_vs_convective", "phase", "expected_phase"])
            writer.writerows(rows)


if __name__ == "__main__":
    main()
