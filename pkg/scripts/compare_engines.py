"""Master-equation versus mean-field two-tone traces on one grid.

    python scripts/compare_engines.py [--dims 5] [--threads 1] [--out compare.csv]

Uses the shipped device parameters with a weak qubit drive (1 kHz) and probe
(10 kHz), 250 Hz steps over 100 kHz around the phonon mode and 250 kHz steps over
20 MHz around the qubit.  Prints the AIT feature of each engine and their
difference; optionally writes the two traces as CSV.
"""
import argparse
import sys
import time

import numpy as np

from aitsim.cli import compare_metrics
from aitsim.model import DriveParams, SystemParams
from aitsim.spectroscopy import segmented_grid, two_tone_sweep


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--dims", type=int, default=5, help="cavity and phonon Fock truncation")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", help="optional CSV path")
    args = ap.parse_args()

    p = SystemParams.table_s1(cavity_dim=args.dims, phonon_dim=args.dims)
    wp = p.mode.omega_p
    drive = DriveParams(wp, eps_d=1e3, eps_p=1e4)
    grid = segmented_grid(wp, 100e3, 250.0, 20e6, 250e3, coarse_center=p.omega_eg)
    t0 = time.perf_counter()
    me = two_tone_sweep(p, drive, grid, "master_equation", threads=args.threads)
    t_me = time.perf_counter() - t0
    mf = two_tone_sweep(p, drive, grid, "mean_field")
    print(f"{grid.points.size} points; master equation {t_me:.1f} s at {args.dims}x2x{args.dims}")
    for key, value in compare_metrics(me, mf, wp, 5e4):
        print(f"{key:<32} {value:.12g}" if isinstance(value, float) else f"{key:<32} {value}")
    if args.out:
        np.savetxt(args.out, np.column_stack([grid.points, me.values, mf.values]), delimiter=",",
                   fmt="%.17g", header="frequency_hz,response_me,response_mf", comments="")
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
