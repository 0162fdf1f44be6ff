"""Simulation check of the oracle quantities, sharing no code with the quadrature.

``(W, V)`` are simulated; the outcome error enters through its conditional
law ``U | V = v ~ N(rho v, 1 - rho^2)`` averaged over the draws (conditional
Monte Carlo), which keeps the noise small enough for percent-level checks.

* ``y_tau``: sample quantile of simulated Y.
* ``f_Y(y_tau)``: draw average of the conditional density of Y.
* ``Pi_tau``: finite policy shift. Moving the index from ``mu - s`` to
  ``mu + s`` switches units with ``mu - s < V <= mu + s`` into treatment;
  ``-dF_Y(y_tau)/d(share treated)`` over ``f_Y`` is the quantile effect.
* ``A_tau``: the within-``W`` untreated minus treated CDF contrast, with ``V``
  drawn from its truncated law given ``D = d`` and ``W``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .dgp import DgpSpec

SWITCH_HALF_WIDTH = 0.05


def _draw_w(spec: DgpSpec, rng, n):
    z = rng.standard_normal(n)
    x = rng.standard_normal(n) if spec.has_covariate else np.zeros(n)
    return z + x, x


def simulate_oracle(spec: DgpSpec, taus, draws: int = 10_000_000, seed: int = 12345) -> list[dict]:
    rng = np.random.default_rng(seed)
    rho, beta = spec.rho, spec.beta
    s = math.sqrt(1.0 - rho**2)
    taus = [float(t) for t in np.atleast_1d(taus)]

    mu, q = _draw_w(spec, rng, draws)
    v = rng.standard_normal(draws)
    treated = v <= mu
    centre = q + rho * v + beta * treated  # conditional mean of Y given (W, V)
    y_sorted = np.sort(centre + s * rng.standard_normal(draws))

    switch = (v > mu - SWITCH_HALF_WIDTH) & (v <= mu + SWITCH_HALF_WIDTH)
    switch_centre = (q + rho * v)[switch]
    del mu, q, v, treated, switch

    # V given D = d and W, by inversion of the truncated normal CDF
    mu2, q2 = _draw_w(spec, rng, draws)
    unif = rng.random(draws)
    c0 = q2 - rho * special.ndtri(unif * special.ndtr(-mu2))  # V > mu
    c1 = q2 + beta + rho * special.ndtri(unif * special.ndtr(mu2))  # V <= mu
    del mu2, q2, unif

    rows = []
    for tau in taus:
        k = min(max(math.ceil(tau * draws), 1), draws)
        y_tau = float(y_sorted[k - 1])
        f = float(np.mean(np.exp(-0.5 * ((y_tau - centre) / s) ** 2))) / (s * math.sqrt(2.0 * math.pi))
        d_cdf = np.mean(special.ndtr((y_tau - beta - switch_centre) / s) - special.ndtr((y_tau - switch_centre) / s))
        a = np.mean(special.ndtr((y_tau - c0) / s) - special.ndtr((y_tau - c1) / s)) / f
        rows.append({"tau": tau, "y_tau": y_tau, "f_y": f, "pi": float(-d_cdf / f), "a": float(a),
                     "switchers": int(switch_centre.size)})
    return rows
