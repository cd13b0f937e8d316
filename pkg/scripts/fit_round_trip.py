"""Synthetic-data round trip: simulate a mean-field spectrum with the shipped
device parameters, add Gaussian noise, fit it back and report the recovery.

    python scripts/fit_round_trip.py [--noise 0.01] [--seed 0] [--start-gamma 10e3] [--start-g 150e3]

Noise is in units of the spectrum's peak.  The fit starts from the given (wrong)
phonon linewidth and coupling; all other parameters are the shipped ones.
"""
import argparse
import sys
import time

from aitsim.config import parse_config, shipped_config
from aitsim.fitting import fit_spectrum, residual_diagnostics, synthetic_spectrum


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--noise", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--start-gamma", type=float, default=10e3, help="initial phonon linewidth (Hz)")
    ap.add_argument("--start-g", type=float, default=150e3, help="initial coupling (Hz)")
    args = ap.parse_args()

    cfg = parse_config(shipped_config("table_s1"))
    truth, drive = cfg.system_params(), cfg.drive_params()
    grid = cfg.frequency_grid().points
    t0 = time.perf_counter()
    data = synthetic_spectrum(truth, drive, grid, noise=args.noise, seed=args.seed)
    fit = fit_spectrum(data, truth.with_mode(gamma=args.start_gamma, g_qh=args.start_g), drive)
    elapsed = time.perf_counter() - t0
    diag = residual_diagnostics(data, fit)

    true_vals = {"gamma": truth.mode.gamma, "g_qh": truth.mode.g_qh}
    print(f"{grid.size} points, noise {args.noise:g} (seed {args.seed}), "
          f"{'converged' if fit.converged else 'NOT converged'} in {fit.n_iterations} iterations, {elapsed:.1f} s")
    print("parameter         fitted          sigma          true   error/sigma")
    for k, v in fit.values.items():
        s = fit.uncertainties[k]
        t = true_vals.get(k)
        z = "" if t is None or s == 0 else f"{(v - t) / s:+.2f}"
        print(f"{k:<15} {v:>12.6g}  {s:>12.3g}  {'' if t is None else f'{t:>12.6g}':>12}  {z:>11}")
    print(f"reduced cost {diag.reduced_cost:.3g} (noise variance {args.noise ** 2:.3g}), "
          f"sign balance {diag.sign_balance:+.2f}")
    return 0 if fit.converged else 1


if __name__ == "__main__":
    sys.exit(main())
