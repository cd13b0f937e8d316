"""Plot an ``ait-sim`` CSV: a spectrum/sweep/compare trace or a long-format Stark map.

    python scripts/plot_csv.py FILE.csv [--out FILE.png]

Needs matplotlib (``pip install aitsim[plot]``).  The tool itself never plots;
this script only documents how its outputs are meant to be read.
"""
import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_csv(path):
    """Column name -> array for an ``ait-sim`` CSV (``#`` metadata lines skipped)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    names = lines[0].strip().split(",")
    values = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return {n: values[:, i] for i, n in enumerate(names)}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("csv")
    ap.add_argument("--out", help="image path (default: CSV path with .png)")
    args = ap.parse_args()
    data = read_csv(args.csv)
    cols = tuple(data)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if cols[:3] == ("qubit_freq", "drive_freq", "response"):
        q = np.unique(data["qubit_freq"])
        f = data["drive_freq"][data["qubit_freq"] == q[0]]
        z = data["response"].reshape(q.size, f.size)
        # true frequency axis; pcolormesh accepts the uneven (segmented) spacing
        mesh = ax.pcolormesh(f / 1e9, (q - q[0]) / 1e6, z, shading="nearest")
        ax.set_xlabel("drive frequency (GHz)")
        ax.set_ylabel("qubit frequency offset (MHz)")
        fig.colorbar(mesh, ax=ax, label="response")
    else:
        f = data[cols[0]]
        for name in cols[1:]:
            if name in ("residual",):
                continue
            ax.plot((f - f.mean()) / 1e6, data[name], ".-", ms=2, lw=0.8, label=name)
        ax.set_xlabel(f"frequency - {f.mean() / 1e9:.6f} GHz (MHz)")
        ax.set_ylabel("response")
        ax.legend()
    out = args.out or args.csv.rsplit(".", 1)[0] + ".png"
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
