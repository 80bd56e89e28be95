#!/usr/bin/env python3
"""Plot a capacity-sweep CSV produced by `powertalk sweep` or run_case_study.

Needs matplotlib (install the package's `plot` extra).
"""

import argparse
import csv
import pathlib
import sys


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv_path", type=pathlib.Path)
    parser.add_argument("--out", type=pathlib.Path, help="image path (default: alongside CSV)")
    args = parser.parse_args()

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib is not installed; install the 'plot' extra", file=sys.stderr)
        return 1

    with open(args.csv_path) as handle:
        rows = list(csv.DictReader(handle))
    if not rows:
        print(f"no rows in {args.csv_path}", file=sys.stderr)
        return 1
    pi = [float(row["pi_W"]) for row in rows]
    c_nom = [float(row["capacity_nominal_bits"]) for row in rows]
    c_opt = [float(row["capacity_opt_bits"]) for row in rows]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(pi, c_nom, "o-", label="nominal resistances")
    ax.plot(pi, c_opt, "s-", label="optimized resistances")
    ax.set_xlabel("power deviation budget [W]")
    ax.set_ylabel("capacity [bits/slot]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()

    out = args.out or args.csv_path.with_suffix(".png")
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
