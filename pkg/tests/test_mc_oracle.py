import numpy as np
import pytest

from uqe.dgp import DgpSpec, apparent_effect, true_uqe
from uqe.mc_oracle import simulate_oracle


@pytest.mark.parametrize("spec", [DgpSpec(beta=1.0, rho=0.5), DgpSpec("covariate", 1.0, 0.75)])
def test_simulation_agrees_with_quadrature(spec):
    taus = (0.2, 0.5, 0.8)
    sim = simulate_oracle(spec, taus, draws=1_000_000, seed=3)
    for row, tau in zip(sim, taus):
        exact = true_uqe(spec, tau)
        assert row["y_tau"] == pytest.approx(exact.y_tau, abs=0.01)
        assert row["f_y"] == pytest.approx(exact.f_y_tau, rel=0.01)
        assert row["pi"] == pytest.approx(exact.pi_tau, rel=0.03, abs=0.01)
        assert row["a"] == pytest.approx(apparent_effect(spec, tau), rel=0.02, abs=0.005)
        assert row["switchers"] > 10_000


def test_no_effect_gives_no_switching_effect():
    row = simulate_oracle(DgpSpec(beta=0.0, rho=0.0), [0.5], draws=200_000)[0]
    assert row["pi"] == 0.0
    assert abs(row["a"]) < 0.01


def test_reproducible():
    a = simulate_oracle(DgpSpec(beta=1.0), [0.4], draws=50_000, seed=9)
    b = simulate_oracle(DgpSpec(beta=1.0), [0.4], draws=50_000, seed=9)
    assert a == b
