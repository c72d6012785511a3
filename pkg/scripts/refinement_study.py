"""Grid refinement of the solid-rotation base flow.

Over one full rotation every interior pathline closes, so the averaged
velocity should vanish in the rigid core.  Prints the core max-norm per grid
and the observed order between successive grids.

    python3 scripts/refinement_study.py --sizes 16 32 64 128 --tau 1.0
"""
import argparse
import time

import numpy as np

from pathacoustics.baseflow import compute_base_flow
from pathacoustics.fields import Grid
from pathacoustics.scenarios import SolidRotation


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64, 128])
    parser.add_argument("--tau", type=float, default=1.0)
    parser.add_argument("--core", type=float, default=0.25, help="radius of the region measured")
    parser.add_argument("--unlimited", action="store_true", help="disable the interpolation limiter")
    args = parser.parse_args(argv)

    prov = SolidRotation(t_end=args.tau)
    print(f"{'n':>5} {'core max |u_bar|':>18} {'order':>7} {'seconds':>8}")
    prev = None
    for n in args.sizes:
        grid = Grid((n, n), (1.0, 1.0))
        start = time.perf_counter()
        bf = compute_base_flow(prov, grid, tau=args.tau, sample_times=[0.0], monotone=not args.unlimited)
        core = np.hypot(*(grid.mesh - 0.5)) < args.core
        err = float(np.max(np.abs(bf.u_bar[0][:, core])))
        order = f"{np.log2(prev / err):7.2f}" if prev else f"{'':>7}"
        print(f"{n:5d} {err:18.3e} {order} {time.perf_counter() - start:8.2f}")
        prev = err


if __name__ == "__main__":
    main()
