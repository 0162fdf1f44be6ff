"""Coverage tables at tau in {0.1, 0.5} over the full (beta, rho) grid.

    python scripts/reproduce_tables.py --reps 1000 --out results/tables
"""

import argparse
from pathlib import Path

from uqe.harness import TABLE_BETAS, TABLE_RHOS, ExperimentPlan, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--variant", default="plain")
    ap.add_argument("--out", default="results/tables")
    args = ap.parse_args()

    plan = ExperimentPlan("coverage", beta_grid=TABLE_BETAS, rho_grid=TABLE_RHOS, tau_grid=(0.1, 0.5),
                          n=args.n, replications=args.reps, variant=args.variant, workers=args.workers)
    res = run(plan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "coverage.csv").write_text(res.to_csv())
    for tau in plan.tau_grid:
        print(f"\ncoverage, tau = {tau}")
        print("beta \\ rho " + "".join(f"{r:>8}" for r in TABLE_RHOS))
        for b in TABLE_BETAS:
            print(f"{b:>10} " + "".join(f"{res.cell(b, r, tau).metric:8.3f}" for r in TABLE_RHOS))


if __name__ == "__main__":
    main()
