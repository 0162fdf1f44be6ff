import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from uqe.dgp import (
    DgpSpec,
    _all_terms,
    apparent_effect,
    bias_curve,
    bias_decomposition,
    cdf_y,
    generate_sample,
    pdf_y,
    pdot_mass,
    t1_true,
    true_uqe,
)
from uqe.errors import InvalidInputError

TAUS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def plain_cdf(y, beta, rho):
    r = rho / math.sqrt(2.0)
    bvn = stats.multivariate_normal(mean=[0, 0], cov=[[1, r], [r, 1]])
    return stats.norm.cdf(y) - bvn.cdf([y, 0.0]) + bvn.cdf([y - beta, 0.0])


def plain_pdf(y, beta, rho):
    r = rho / math.sqrt(2.0)
    c = math.sqrt(1 - r * r)
    return (stats.norm.pdf(y) - stats.norm.pdf(y) * stats.norm.cdf(-r * y / c)
            + stats.norm.pdf(y - beta) * stats.norm.cdf(-r * (y - beta) / c))


def plain_pi(y, f, beta, rho):
    sd = math.sqrt(1 - rho**2 / 2)
    return (stats.norm.cdf(y / sd) - stats.norm.cdf((y - beta) / sd)) / f


def test_sampler_shapes_and_treatment_share():
    data = generate_sample(DgpSpec(rho=0.5), 200_000, np.random.default_rng(1))
    assert data.n == 200_000 and data.x.shape[1] == 0
    # P(V <= Z) = 1/2
    assert data.d.mean() == pytest.approx(0.5, abs=0.005)
    cov = generate_sample(DgpSpec(variant="covariate"), 1000, np.random.default_rng(1))
    assert cov.x.shape == (1000, 1)


@pytest.mark.parametrize("rho", [0.0, 0.5, 0.9])
def test_latent_correlations(rho):
    _, lat = generate_sample(DgpSpec(rho=rho), 200_000, np.random.default_rng(2), debug=True)
    for u in (lat["u0"], lat["u1"]):
        assert np.corrcoef(u, lat["v"])[0, 1] == pytest.approx(rho, abs=0.01)
        assert stats.kstest(u, "norm").statistic < 0.005


def test_same_seed_same_sample():
    a = generate_sample(DgpSpec(seed=4), 100)
    b = generate_sample(DgpSpec(seed=4), 100)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.d, b.d)


def test_spec_validation():
    for bad in ({"rho": 1.0}, {"rho": -1.2}, {"variant": "probit"}, {"beta": math.inf}, {"latent": "svd"}):
        with pytest.raises(InvalidInputError):
            DgpSpec(**bad)
    with pytest.raises(InvalidInputError):
        generate_sample(DgpSpec(), 0)
    with pytest.raises(InvalidInputError):
        true_uqe(DgpSpec(), 1.0)


def test_clipped_sampler_is_valid_when_matrix_is():
    _, lat = generate_sample(DgpSpec(rho=0.5, latent="clipped"), 200_000, np.random.default_rng(2), debug=True)
    assert np.corrcoef(lat["u1"], lat["v"])[0, 1] == pytest.approx(0.5, abs=0.01)
    assert np.corrcoef(lat["u0"], lat["u1"])[0, 1] == pytest.approx(0.0, abs=0.01)


@pytest.mark.parametrize("beta,rho", [(1.0, 0.0), (1.0, 0.5), (-0.5, 0.9), (0.25, -0.75)])
def test_plain_closed_forms(beta, rho):
    spec = DgpSpec(beta=beta, rho=rho)
    for y in (-1.5, 0.0, 0.7, 2.0):
        assert cdf_y(spec, y) == pytest.approx(plain_cdf(y, beta, rho), abs=1e-6)
        assert pdf_y(spec, y) == pytest.approx(plain_pdf(y, beta, rho), abs=1e-9)
    for tau in (0.1, 0.5, 0.9):
        res = true_uqe(spec, tau)
        assert plain_cdf(res.y_tau, beta, rho) == pytest.approx(tau, abs=1e-6)
        assert res.f_y_tau == pytest.approx(plain_pdf(res.y_tau, beta, rho), rel=1e-8)
        assert res.pi_tau == pytest.approx(plain_pi(res.y_tau, res.f_y_tau, beta, rho), rel=1e-7, abs=1e-10)


def test_zero_effect_has_normal_quantiles():
    res = true_uqe(DgpSpec(beta=0.0, rho=0.5), 0.3)
    assert res.y_tau == pytest.approx(stats.norm.ppf(0.3), abs=1e-8)
    assert res.pi_tau == 0.0


@pytest.mark.parametrize("variant", ["plain", "covariate"])
def test_weight_mass_and_t1(variant):
    spec = DgpSpec(variant=variant, beta=1.0, rho=0.5)
    assert pdot_mass(spec) == pytest.approx(1.0, abs=1e-8)
    sm2 = 1.0 if variant == "plain" else 2.0
    assert t1_true(spec) == pytest.approx(1 / math.sqrt(2 * math.pi * (1 + sm2)), rel=1e-12)


@settings(max_examples=25)
@given(st.sampled_from(["plain", "covariate"]), st.floats(-1, 1), st.floats(-0.9, 0.9),
       st.lists(st.floats(-4, 4), min_size=2, max_size=2, unique=True))
def test_cdf_is_a_distribution(variant, beta, rho, ys):
    spec = DgpSpec(variant=variant, beta=beta, rho=rho)
    lo, hi = sorted(ys)
    f_lo, f_hi = cdf_y(spec, lo), cdf_y(spec, hi)
    assert 0.0 <= f_lo <= f_hi <= 1.0
    assert pdf_y(spec, lo) >= 0.0
    assert cdf_y(spec, -12.0) < 1e-8 and cdf_y(spec, 12.0) > 1 - 1e-8


@settings(max_examples=20)
@given(st.sampled_from(["plain", "covariate"]), st.floats(-1, 1), st.floats(-0.9, 0.9),
       st.sampled_from(TAUS))
def test_reflection_symmetry(variant, beta, rho, tau):
    # (Y, V, Z, X) -> (beta - Y, -V, -Z, -X) swaps the arms and keeps (beta, rho); quantile levels flip
    spec = DgpSpec(variant, beta, rho)
    a = true_uqe(spec, tau)
    b = true_uqe(spec, 1 - tau)
    assert a.y_tau == pytest.approx(beta - b.y_tau, abs=1e-8)
    assert a.pi_tau == pytest.approx(b.pi_tau, abs=1e-8)
    assert apparent_effect(spec, tau) == pytest.approx(apparent_effect(spec, 1 - tau), abs=1e-8)


@pytest.mark.parametrize("variant", ["plain", "covariate"])
def test_refinement_is_stable(variant):
    spec = DgpSpec(variant=variant, beta=1.0, rho=0.75)
    coarse = _all_terms(spec, 0.3, 16)
    fine = _all_terms(spec, 0.3, 32)
    assert np.max(np.abs(coarse - fine)) < 1e-7


@pytest.mark.parametrize("variant", ["plain", "covariate"])
@pytest.mark.parametrize("rho", [0.0, 0.5, 0.9])
def test_bias_identity_and_components(variant, rho):
    spec = DgpSpec(variant=variant, beta=1.0, rho=rho)
    for tau in (0.2, 0.5, 0.8):
        res = bias_decomposition(spec, tau)
        assert res.a_tau - res.pi_tau == pytest.approx(res.b1_tau + res.b2_tau, abs=1e-6)
        if rho == 0.0:
            assert res.b2_tau == pytest.approx(0.0, abs=1e-12)
            if variant == "plain":
                assert res.b1_tau == pytest.approx(0.0, abs=1e-8)
            else:
                assert abs(res.b1_tau) > 1e-3


def test_zero_effect_zero_bias_without_endogeneity():
    res = bias_decomposition(DgpSpec(variant="covariate", beta=0.0, rho=0.0), 0.4)
    assert res.pi_tau == 0.0
    assert res.a_tau == pytest.approx(0.0, abs=1e-10)
    assert res.b1_tau == pytest.approx(0.0, abs=1e-10)


def test_bias_curve_rows():
    rows = bias_curve("plain", 1.0, (0.25, 0.75), (0.0, 0.5))
    assert len(rows) == 4
    assert {"rho", "tau", "pi", "a", "b1", "b2", "b"} <= set(rows[0])
    assert all(r["b"] == pytest.approx(r["b1"] + r["b2"], abs=1e-6) for r in rows)
