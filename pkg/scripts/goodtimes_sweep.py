"""Good-time density of the reflected walk |S_n| as the horizon grows.

A delta schedule is calibrated once on training seeds, then the density of
good times at N is measured on held-out seeds for a range of N. Writes a CSV
with columns N, mean_density, min_density, fraction_above.

    python3 scripts/goodtimes_sweep.py [--p 0.75] [--rho 0.1] [--out sweep.csv]
"""
import argparse
from pathlib import Path

import numpy as np

from ergolab.driver import DriverSpec, OmegaPath
from ergolab.io import write_csv
from ergolab.subadd import calibrate_delta, detect_good_times, walk_cocycle


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--p", type=float, default=0.75, help="probability of a +1 step")
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--horizons", type=int, nargs="+", default=[500, 1000, 2000, 5000, 10_000])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--out", type=Path, default=Path("goodtimes_sweep.csv"))
    args = p.parse_args()

    spec = DriverSpec.iid([1 - args.p, args.p])
    c = walk_cocycle(spec, [-1, 1])
    A = 2 * args.p - 1
    deltas = calibrate_delta(c, spec, list(range(1000, 1200)), max(args.horizons), args.rho,
                             samples_per_path=8, A_hat=A)
    rows = []
    for N in args.horizons:
        dens = np.array([detect_good_times(c, OmegaPath(spec, s), N, deltas, A).density
                         for s in range(1, args.seeds + 1)])
        rows.append([N, float(dens.mean()), float(dens.min()), float(np.mean(dens > 1 - args.rho))])
        print(f"N={N:>6}  mean={dens.mean():.4f}  min={dens.min():.4f}  above={rows[-1][3]:.2f}")
    write_csv(args.out, ["N", "mean_density", "min_density", "fraction_above"], rows)


if __name__ == "__main__":
    main()
