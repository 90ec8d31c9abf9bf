#!/usr/bin/env python3
"""Log-log plot of the two-scale error norms in a results.csv."""
import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

NORMS = ["norm_u_eps_minus_u0", "norm_minus_u1", "norm_minus_u1_tilde", "norm_eps2_u2",
         "norm_order2_remainder"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv")
    ap.add_argument("-o", "--out", default="rates.png")
    args = ap.parse_args()

    series = defaultdict(list)
    slopes = {}
    with open(args.csv, newline="") as f:
        for row in csv.DictReader(f):
            q = row["quantity"]
            if q in NORMS:
                series[q].append((float(row["param"]), float(row["mean"]), float(row["stderr"])))
            elif q.startswith("slope_"):
                slopes[q[len("slope_"):]] = row["mean"]

    if not series:
        raise SystemExit("no two-scale norms in " + args.csv)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for q, pts in series.items():
        pts.sort()
        eps, val, se = zip(*pts)
        label = q if q not in slopes else f"{q} (slope {float(slopes[q]):.2f})"
        ax.errorbar(eps, val, yerr=se, marker="o", capsize=3, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("eps")
    ax.set_ylabel("||.||_{2,eps}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print("wrote", args.out)


if __name__ == "__main__":
    main()
