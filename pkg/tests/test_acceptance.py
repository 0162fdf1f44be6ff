"""One test per acceptance criterion; each records a PASS/FAIL line in the terminal summary."""

import math
import time

import numpy as np
import pytest
from scipy import integrate, stats

from uqe.core_stats import GAUSSIAN, kde
from uqe.data import Dataset
from uqe.dgp import DgpSpec, apparent_effect, bias_decomposition, generate_sample, true_uqe
from uqe.engine import estimate_t1
from uqe.harness import ExperimentPlan, run
from uqe.mc_oracle import simulate_oracle
from uqe.propensity import PsModel, d2P_dz1_dalpha, dP_dz1, fit_mle, mle_influence, propensity
from uqe.series import BasisSpec, dpredict_dz1, fit_series, predict

pytestmark = pytest.mark.slow

REPS = 1000
GRID_TAUS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
GRID_RHOS = (0.0, 0.25, 0.5, 0.75, 0.9)


@pytest.fixture(scope="module")
def size_run():
    plan = ExperimentPlan("power", beta_grid=(0.0,), rho_grid=(0.0,), tau_grid=(0.2, 0.3, 0.4, 0.5),
                          n=1000, replications=REPS, seed=20240101)
    return run(plan)


def _within(value, target, tol):
    return abs(value - target) <= tol


def test_criterion_1_coverage_low_quantile(record_acceptance):
    res = run(ExperimentPlan("coverage", beta_grid=(0.0,), rho_grid=(0.0,), tau_grid=(0.1,),
                             n=1000, replications=REPS))
    c = res.cells[0]
    ok = _within(c.metric, 0.952, 0.02) and not c.flagged
    record_acceptance(1, ok, f"coverage(0, 0, 0.1) = {c.metric:.3f} (mc se {c.mc_se:.3f}, "
                             f"{c.successes}/{c.replications} ok); target 0.952 +/- 0.02")
    assert ok


def test_criterion_2_coverage_median_and_stress(record_acceptance):
    res = run(ExperimentPlan("coverage", beta_grid=(0.0, -1.0), rho_grid=(0.0, 0.9), tau_grid=(0.5,),
                             n=1000, replications=REPS))
    null = res.cell(0.0, 0.0, 0.5).metric
    stress = res.cell(-1.0, 0.9, 0.5).metric
    ok_null = _within(null, 0.941, 0.02)
    ok_stress = _within(stress, 0.692, 0.04)
    record_acceptance(2, ok_null and ok_stress,
                      f"coverage(0, 0, 0.5) = {null:.3f} (target 0.941 +/- 0.02, "
                      f"{'ok' if ok_null else 'miss'}); coverage(-1, 0.9, 0.5) = {stress:.3f} "
                      f"(target 0.692 +/- 0.04, {'ok' if ok_stress else 'miss'})")
    assert ok_null
    # the stress target is not reproduced by a valid draw of the latent errors; see the decisions notes
    assert ok_stress


def test_criterion_3_size_and_power(size_run, record_acceptance):
    sizes = {tau: size_run.cell(0.0, 0.0, tau).metric for tau in (0.2, 0.3, 0.4, 0.5)}
    ok_size = all(0.03 <= s <= 0.07 for s in sizes.values())
    betas = (-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0)
    power = run(ExperimentPlan("power", beta_grid=betas, rho_grid=(0.0,), tau_grid=(0.4,),
                               n=1000, replications=300, seed=777))
    rate = {b: power.cell(b, 0.0, 0.4) for b in betas}
    violations = []
    for side in (-1.0, 1.0):
        chain = [rate[side * m] for m in (0.0, 0.25, 0.5, 0.75, 1.0)]
        for lo, hi in zip(chain, chain[1:]):
            noise = 2.0 * math.hypot(lo.mc_se, hi.mc_se)
            if hi.metric < lo.metric - noise:
                violations.append((lo.beta, hi.beta))
    ok = ok_size and not violations
    curve = ", ".join(f"{b:+.2f}:{rate[b].metric:.2f}" for b in betas)
    record_acceptance(3, ok, "size " + ", ".join(f"tau={t}: {s:.3f}" for t, s in sizes.items())
                      + f"; power at tau=0.4 [{curve}]" + (f"; non-monotone {violations}" if violations else ""))
    assert ok


def test_criterion_4_quadrature_vs_simulation(record_acceptance):
    worst = (0.0, None)
    exact_zero = True
    for beta in (0.0, 1.0):
        for rho in GRID_RHOS:
            spec = DgpSpec(beta=beta, rho=rho)
            sim = simulate_oracle(spec, GRID_TAUS, draws=10_000_000, seed=2024)
            for row, tau in zip(sim, GRID_TAUS):
                truth = bias_decomposition(spec, tau)
                for key, value in (("pi", truth.pi_tau), ("a", truth.a_tau)):
                    err = abs(row[key] - value)
                    score = min(err / max(abs(value), 1e-300), err / 1e-3 * 0.01)
                    if score > worst[0]:
                        worst = (score, (beta, rho, tau, key, value, row[key]))
                if beta == 0.0:
                    exact_zero &= truth.pi_tau == 0.0
                    if rho == 0.0:
                        exact_zero &= abs(truth.a_tau) < 1e-12 and abs(truth.b1_tau) < 1e-12
    ok = worst[0] <= 0.01 and exact_zero
    record_acceptance(4, ok, f"worst quadrature-vs-MC discrepancy {100 * worst[0]:.2f}% (scaled) at "
                             f"(beta, rho, tau, term) = {worst[1][:4]}; zero effect exact: {exact_zero}")
    assert ok


def test_criterion_5_bias_decomposition(record_acceptance):
    gap = 0.0
    b2_zero = True
    for variant in ("plain", "covariate"):
        for rho in GRID_RHOS:
            for tau in GRID_TAUS:
                r = bias_decomposition(DgpSpec(variant, 1.0, rho), tau)
                gap = max(gap, abs(r.a_tau - r.pi_tau - r.b1_tau - r.b2_tau))
                if rho == 0.0:
                    b2_zero &= r.b2_tau == 0.0
    b1 = [bias_decomposition(DgpSpec("covariate", 1.0, 0.0), t).b1_tau for t in (0.25, 0.5, 0.75)]
    ok = gap <= 1e-6 and b2_zero and all(abs(v) > 1e-3 for v in b1)
    record_acceptance(5, ok, f"max |A - Pi - B1 - B2| = {gap:.1e}; B2 == 0 at rho=0: {b2_zero}; "
                             f"covariate B1 at rho=0, beta=1: {', '.join(f'{v:.4f}' for v in b1)}")
    assert ok


def test_criterion_6_rmse_falls_with_n(record_acceptance):
    res = run(ExperimentPlan("rmse", beta_grid=(1.0,), rho_grid=(0.5,), tau_grid=(0.5,),
                             replications=200, n_grid=(500, 4000)))
    small, large = res.cell(1.0, 0.5, 0.5, 500), res.cell(1.0, 0.5, 0.5, 4000)
    ok = large.metric < small.metric
    record_acceptance(6, ok, f"RMSE(n=500) = {small.metric:.4f}, RMSE(n=4000) = {large.metric:.4f} "
                             f"(truth {large.truth:.4f})")
    assert ok


def test_criterion_7_null_statistic_is_normal(size_run, record_acceptance):
    draws = size_run.draws[(0.0, 0.0, 0.5, 1000)]
    ks = stats.kstest(draws, "norm").statistic
    ok = ks <= 0.05 and draws.size >= 0.95 * REPS
    record_acceptance(7, ok, f"KS distance of {draws.size} null statistics (tau=0.5) to N(0,1) = {ks:.4f}; "
                             f"bound 0.05")
    assert ok


def test_criterion_8_micro_suite(record_acceptance):
    start = time.perf_counter()
    checks = {}
    mass = integrate.quad(lambda u: GAUSSIAN(u), -np.inf, np.inf, epsabs=1e-13)[0]
    checks["kernel mass"] = abs(mass - 1.0) <= 1e-8

    rng = np.random.default_rng(8)
    sample = rng.standard_normal(500)
    kde_mass = integrate.quad(lambda y: kde(sample, y, 0.3), -12, 12, limit=400, epsabs=1e-12)[0]
    checks["kde mass"] = abs(kde_mass - 1.0) <= 1e-6

    step = 1e-6
    worst = 0.0
    for kind in ("probit", "logit"):
        for alpha in ([0.2, 1.1, -0.4], [-0.5, 0.7, 0.3]):
            m = PsModel(kind=kind, alpha=np.array(alpha), n_z=1)
            z, x = np.array([0.3, -1.2]), np.array([[0.5], [1.0]])
            fd = (propensity(m, z + step, x) - propensity(m, z - step, x)) / (2 * step)
            worst = max(worst, np.max(np.abs(dP_dz1(m, z, x) / fd - 1)))
            grad = d2P_dz1_dalpha(m, z, x)
            for k in range(3):
                e = np.zeros(3)
                e[k] = step
                up = dP_dz1(PsModel(kind=kind, alpha=np.array(alpha) + e, n_z=1), z, x)
                dn = dP_dz1(PsModel(kind=kind, alpha=np.array(alpha) - e, n_z=1), z, x)
                fd_k = (up - dn) / (2 * step)
                worst = max(worst, np.max(np.abs(grad[:, k] - fd_k) / np.maximum(np.abs(fd_k), 1e-3)))
    m = PsModel(kind="probit", alpha=np.array([0.1, 0.8]), n_z=1)
    zs = rng.standard_normal(400)
    ps_vals = propensity(m, zs)
    fit = fit_series(BasisSpec(3), ps_vals[:, None], np.sin(3 * ps_vals) + rng.normal(0, 0.1, 400))
    z0 = np.array([-0.7, 0.4])
    fd = (predict(fit, propensity(m, z0 + step)) - predict(fit, propensity(m, z0 - step))) / (2 * step)
    an = dpredict_dz1(fit, propensity(m, z0), dp_dz1=dP_dz1(m, z0))
    worst = max(worst, np.max(np.abs(an / fd - 1)))
    checks["derivatives"] = worst <= 1e-5

    n = 100_000
    z = rng.standard_normal(n)
    d = (rng.standard_normal(n) <= z).astype(float)
    data = Dataset(y=rng.standard_normal(n), d=d, z=z, x=None)
    ps = fit_mle(data, "probit")
    checks["probit MLE"] = bool(np.all(np.abs(ps.alpha - [0.0, 1.0]) <= 0.05))
    t1 = estimate_t1(data, ps)
    checks["T1"] = abs(t1 - 1 / (2 * math.sqrt(math.pi))) <= 0.005
    psi = mle_influence(ps, data)
    checks["influence mean"] = bool(np.all(np.abs(psi.mean(axis=0)) <= 1e-8))
    elapsed = time.perf_counter() - start
    checks["runtime"] = elapsed <= 60
    ok = all(checks.values())
    record_acceptance(8, ok, "; ".join(f"{k}: {'ok' if v else 'FAIL'}" for k, v in checks.items())
                      + f" (kernel mass err {abs(mass - 1):.1e}, kde mass err {abs(kde_mass - 1):.1e}, "
                        f"max derivative rel err {worst:.1e}, alpha {np.round(ps.alpha, 3).tolist()}, "
                        f"T1 {t1:.4f}, {elapsed:.1f}s)")
    assert ok
