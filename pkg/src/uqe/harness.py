"""Monte Carlo experiments: power of the no-effect test, CI coverage, RMSE.

Replication ``r`` of the design cell ``(beta_j, rho_k)`` always draws its
sample from ``SeedSequence(seed, spawn_key=(j, k, r))``. Every tau and every
sample size of the plan reuses that stream, so results do not depend on the
order or the process in which replications run.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from itertools import product

import numpy as np

from .dgp import DgpSpec, generate_sample, true_uqe
from .engine import EstimationConfig, estimate_uqe, test_no_effect
from .errors import (
    DegenerateDensityError,
    DegenerateVarianceError,
    EstimationFailure,
    InvalidInputError,
    SeparationError,
    WeakInterventionError,
)

log = logging.getLogger(__name__)

KINDS = ("power", "coverage", "rmse")
CRITICAL_5PCT = 1.959964
FLAG_FAILURE_RATE = 0.05
TABLE_BETAS = (-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0)
TABLE_RHOS = (0.0, 0.25, 0.5, 0.75, 0.9)
POWER_BETAS = tuple(np.round(np.linspace(-1.0, 1.0, 25), 12))

_FAILURE_NAMES = (
    (SeparationError, "separation"),
    (DegenerateDensityError, "degenerate_density"),
    (WeakInterventionError, "weak_intervention"),
    (DegenerateVarianceError, "degenerate_variance"),
    (EstimationFailure, "estimation_failure"),
)


def failure_kind(exc: Exception) -> str:
    for cls, name in _FAILURE_NAMES:
        if isinstance(exc, cls):
            return name
    raise exc


@dataclass(frozen=True)
class ExperimentPlan:
    kind: str
    beta_grid: tuple = (0.0,)
    rho_grid: tuple = (0.0,)
    tau_grid: tuple = (0.5,)
    n: int = 1000
    replications: int = 1000
    seed: int = 20240101
    config: EstimationConfig = EstimationConfig()
    variant: str = "plain"
    latent: str = "conditional"
    n_grid: tuple = ()
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"experiment kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("beta_grid", "rho_grid", "tau_grid", "n_grid"):
            object.__setattr__(self, name, tuple(float(v) if name != "n_grid" else int(v)
                                                 for v in np.atleast_1d(getattr(self, name))))
        if not (self.beta_grid and self.rho_grid and self.tau_grid):
            raise InvalidInputError("beta, rho and tau grids must be nonempty")
        if self.replications < 1:
            raise InvalidInputError("replications must be at least 1")
        if self.n < 10 or any(m < 10 for m in self.n_grid):
            raise InvalidInputError("sample sizes must be at least 10")
        if self.workers < 1:
            raise InvalidInputError("workers must be at least 1")
        for tau in self.tau_grid:
            if not 0.0 < tau < 1.0:
                raise InvalidInputError(f"tau must lie in (0, 1), got {tau}")
        for rho in self.rho_grid:
            DgpSpec(self.variant, 0.0, rho, latent=self.latent)

    @property
    def sizes(self) -> tuple:
        return self.n_grid or (self.n,)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["config"] = self.config.to_dict()
        return out


@dataclass
class CellResult:
    beta: float
    rho: float
    tau: float
    n: int
    replications: int
    successes: int
    failures: dict
    metric: float
    mc_se: float
    truth: float = float("nan")
    mean_estimate: float = float("nan")
    mean_se: float = float("nan")

    @property
    def failure_rate(self) -> float:
        return sum(self.failures.values()) / self.replications

    @property
    def flagged(self) -> bool:
        return self.failure_rate > FLAG_FAILURE_RATE

    def row(self, metric_name: str) -> dict:
        return {"beta": self.beta, "rho": self.rho, "tau": self.tau, "n": self.n,
                metric_name: self.metric, "mc_se": self.mc_se, "truth": self.truth,
                "mean_estimate": self.mean_estimate, "mean_se": self.mean_se,
                "replications": self.replications, "successes": self.successes,
                "failures": sum(self.failures.values()),
                **{f"fail_{k}": v for k, v in sorted(self.failures.items())},
                "flagged": self.flagged}


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    cells: list = field(default_factory=list)
    draws: dict = field(default_factory=dict, repr=False)

    @property
    def metric_name(self) -> str:
        return {"power": "rejection_rate", "coverage": "coverage_rate", "rmse": "rmse"}[self.plan.kind]

    @property
    def any_flagged(self) -> bool:
        return any(c.flagged for c in self.cells)

    def cell(self, beta: float, rho: float, tau: float, n: int | None = None) -> CellResult:
        for c in self.cells:
            if (math.isclose(c.beta, beta, abs_tol=1e-12) and math.isclose(c.rho, rho, abs_tol=1e-12)
                    and math.isclose(c.tau, tau, abs_tol=1e-12) and (n is None or c.n == n)):
                return c
        raise KeyError((beta, rho, tau, n))

    def rows(self) -> list[dict]:
        rows = [c.row(self.metric_name) for c in self.cells]
        keys = sorted({k for r in rows for k in r if k.startswith("fail_")})
        for r in rows:
            for k in keys:
                r.setdefault(k, 0)
        return rows

    def to_csv(self) -> str:
        rows = self.rows()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"plan": self.plan.to_dict(), "metric": self.metric_name, "cells": self.rows()},
                          indent=2, default=float)

    def power_series(self) -> list[dict]:
        """(beta, rejection_rate) pairs for each (rho, tau), sorted by beta."""
        return sorted(({"rho": c.rho, "tau": c.tau, "beta": c.beta, "rejection_rate": c.metric}
                       for c in self.cells), key=lambda r: (r["rho"], r["tau"], r["beta"]))


def replication_rng(seed: int, j: int, k: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j, k, rep)))


def _one_replication(plan: ExperimentPlan, j: int, k: int, rep: int, n: int) -> list:
    """Outcome per tau: a float (statistic or estimate), a (pi_hat, lo, hi, se) tuple, or a failure name."""
    spec = DgpSpec(plan.variant, plan.beta_grid[j], plan.rho_grid[k], latent=plan.latent)
    data = generate_sample(spec, n, replication_rng(plan.seed, j, k, rep))
    out = []
    for tau in plan.tau_grid:
        cfg = plan.config.with_tau(tau)
        try:
            if plan.kind == "power":
                out.append(test_no_effect(data, cfg)[0])
            else:
                est = estimate_uqe(data, cfg)
                out.append((est.pi_hat, est.ci[0], est.ci[1], est.se))
        except EstimationFailure as exc:
            out.append(failure_kind(exc))
    return out


def _task(args):
    plan, j, k, n, reps = args
    return [_one_replication(plan, j, k, r, n) for r in reps]


def _collect(plan: ExperimentPlan, n: int) -> dict:
    """Raw outcomes keyed by (j, k): list over replications of per-tau outcomes."""
    cells = list(product(range(len(plan.beta_grid)), range(len(plan.rho_grid))))
    reps = list(range(plan.replications))
    if plan.workers == 1:
        return {(j, k): _task((plan, j, k, n, reps)) for j, k in cells}
    chunk = max(1, math.ceil(plan.replications / (4 * plan.workers)))
    tasks = [(plan, j, k, n, reps[s:s + chunk]) for j, k in cells for s in range(0, len(reps), chunk)]
    with ProcessPoolExecutor(max_workers=plan.workers) as pool:
        parts = list(pool.map(_task, tasks))
    out = {c: [] for c in cells}
    for (_, j, k, _, _), part in zip(tasks, parts):
        out[(j, k)].extend(part)
    return out


def _rate_se(r: float, m: int) -> float:
    return math.sqrt(r * (1.0 - r) / m) if m else float("nan")


def _summarise(plan: ExperimentPlan, raw: dict, n: int, truths: dict) -> tuple[list, dict]:
    cells, draws = [], {}
    for (j, k), reps in raw.items():
        beta, rho = plan.beta_grid[j], plan.rho_grid[k]
        for t, tau in enumerate(plan.tau_grid):
            outcomes = [r[t] for r in reps]
            fails: dict = {}
            for o in outcomes:
                if isinstance(o, str):
                    fails[o] = fails.get(o, 0) + 1
            good = [o for o in outcomes if not isinstance(o, str)]
            m = len(good)
            if sum(fails.values()):
                log.info("cell beta=%g rho=%g tau=%g n=%d: %s failed replications excluded",
                         beta, rho, tau, n, fails)
            truth = truths.get((j, k, t), float("nan"))
            if plan.kind == "power":
                stats_ = np.array(good)
                rate = float(np.mean(np.abs(stats_) > CRITICAL_5PCT)) if m else float("nan")
                cell = CellResult(beta, rho, tau, n, len(outcomes), m, fails, rate, _rate_se(rate, m))
                draws[(beta, rho, tau, n)] = stats_
            else:
                arr = np.array(good).reshape(m, 4)
                pis, lo, hi, se = arr.T
                if plan.kind == "coverage":
                    rate = float(np.mean((lo <= truth) & (truth <= hi))) if m else float("nan")
                    metric, mc_se = rate, _rate_se(rate, m)
                else:
                    sq = (pis - truth) ** 2
                    metric = float(np.sqrt(sq.mean())) if m else float("nan")
                    # delta method for the MC error of sqrt(mean squared error)
                    mc_se = float(sq.std(ddof=1) / (2.0 * metric * math.sqrt(m))) if m > 1 and metric > 0 else float("nan")
                cell = CellResult(beta, rho, tau, n, len(outcomes), m, fails, metric, mc_se, truth,
                                  float(pis.mean()) if m else float("nan"),
                                  float(se.mean()) if m else float("nan"))
                draws[(beta, rho, tau, n)] = pis
            cells.append(cell)
    order = {(b, r, t): i for i, (b, r, t) in enumerate(product(plan.beta_grid, plan.rho_grid, plan.tau_grid))}
    cells.sort(key=lambda c: (c.n, order[(c.beta, c.rho, c.tau)]))
    return cells, draws


def _truths(plan: ExperimentPlan) -> dict:
    if plan.kind == "power":
        return {}
    out = {}
    for (j, beta), (k, rho), (t, tau) in product(enumerate(plan.beta_grid), enumerate(plan.rho_grid),
                                                 enumerate(plan.tau_grid)):
        out[(j, k, t)] = true_uqe(DgpSpec(plan.variant, beta, rho), tau).pi_tau
    return out


def run(plan: ExperimentPlan) -> ExperimentResult:
    truths = _truths(plan)
    result = ExperimentResult(plan)
    for n in plan.sizes:
        cells, draws = _summarise(plan, _collect(plan, n), n, truths)
        result.cells.extend(cells)
        result.draws.update(draws)
    return result


def _require(plan: ExperimentPlan, kind: str) -> None:
    if plan.kind != kind:
        raise InvalidInputError(f"plan kind is {plan.kind!r}, expected {kind!r}")


def run_power(plan: ExperimentPlan) -> ExperimentResult:
    _require(plan, "power")
    return run(plan)


def run_coverage(plan: ExperimentPlan) -> ExperimentResult:
    _require(plan, "coverage")
    return run(plan)


def run_rmse(plan: ExperimentPlan) -> ExperimentResult:
    _require(plan, "rmse")
    return run(plan)
