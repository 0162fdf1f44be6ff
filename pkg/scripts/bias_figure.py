"""Bias of the exogenous-treatment estimand and its two parts, by tau and rho."""

import argparse
import csv
import sys

import numpy as np

from uqe.dgp import bias_curve


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--variant", default="covariate", choices=("plain", "covariate"))
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--rho", type=float, nargs="*", default=[0.0, 0.25, 0.5, 0.75, 0.9])
    ap.add_argument("--plot", default=None, help="PNG path (needs matplotlib)")
    args = ap.parse_args()

    taus = np.round(np.arange(0.05, 0.951, 0.025), 3)
    rows = bias_curve(args.variant, args.beta, taus, args.rho)
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    if args.plot:
        import matplotlib.pyplot as plt

        fig, axes = plt.subplots(1, 3, figsize=(12, 3.5), sharex=True)
        for rho in args.rho:
            sel = [r for r in rows if r["rho"] == rho]
            for ax, key in zip(axes, ("b", "b1", "b2")):
                ax.plot([r["tau"] for r in sel], [r[key] for r in sel], label=f"rho={rho}")
                ax.set_title(key)
        axes[0].legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)


if __name__ == "__main__":
    main()
