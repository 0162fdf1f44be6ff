"""Rejection rate of the no-effect test against beta, one curve per (rho, tau)."""

import argparse
from pathlib import Path

from uqe.harness import POWER_BETAS, TABLE_RHOS, ExperimentPlan, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--rho", type=float, nargs="*", default=list(TABLE_RHOS))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/power")
    ap.add_argument("--plot", action="store_true", help="also save a PNG (needs matplotlib)")
    args = ap.parse_args()

    plan = ExperimentPlan("power", beta_grid=POWER_BETAS, rho_grid=tuple(args.rho), tau_grid=(0.2, 0.3, 0.4, 0.5),
                          n=args.n, replications=args.reps, workers=args.workers)
    res = run(plan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "power.csv").write_text(res.to_csv())
    series = res.power_series()
    for rho in plan.rho_grid:
        for tau in plan.tau_grid:
            pts = [s for s in series if s["rho"] == rho and s["tau"] == tau]
            print(f"rho={rho} tau={tau}: " + " ".join(f"{p['rejection_rate']:.2f}" for p in pts))
    if args.plot:
        import matplotlib.pyplot as plt

        fig, axes = plt.subplots(1, len(plan.tau_grid), figsize=(4 * len(plan.tau_grid), 3.5), sharey=True)
        for ax, tau in zip(axes, plan.tau_grid):
            for rho in plan.rho_grid:
                pts = [s for s in series if s["rho"] == rho and s["tau"] == tau]
                ax.plot([p["beta"] for p in pts], [p["rejection_rate"] for p in pts], label=f"rho={rho}")
            ax.axhline(0.05, color="grey", lw=0.5)
            ax.set_title(f"tau = {tau}")
            ax.set_xlabel("beta")
        axes[0].set_ylabel("rejection rate")
        axes[0].legend()
        fig.tight_layout()
        fig.savefig(out / "power.png", dpi=120)


if __name__ == "__main__":
    main()
