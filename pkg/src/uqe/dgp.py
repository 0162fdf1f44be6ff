"""Gaussian threshold-crossing designs: sampler and quadrature ground truth.

Two variants share the structure ``Y(0) = q(X) + U0``, ``Y(1) = q(X) + beta + U1``
and ``D = 1{V <= mu(W)}`` with ``corr(U_d, V) = rho``:

* ``plain``: no covariate, ``q = 0``, ``mu = Z``;
* ``covariate``: ``q(X) = X``, ``mu = Z + X``.

Every population quantity depends on ``W`` only through the index
``m = mu(W)`` (after integrating ``X`` given ``m`` in closed form), so the
oracle integrates over ``m`` and the latent ``V``, never over ``W`` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from .data import Dataset
from .errors import InternalConsistencyError, InvalidInputError, QuadratureFailure
from .quadrature import gl_rule, refine

VARIANTS = ("plain", "covariate")
LATENTS = ("conditional", "clipped")
SPAN = 8.0
ROOT_BRACKET = (-10.0, 10.0)
IDENTITY_TOL = 1e-6


@dataclass(frozen=True)
class DgpSpec:
    variant: str = "plain"
    beta: float = 0.0
    rho: float = 0.0
    seed: int = 0
    latent: str = "conditional"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidInputError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.latent not in LATENTS:
            raise InvalidInputError(f"latent construction must be one of {LATENTS}, got {self.latent!r}")
        if not (np.isfinite(self.beta) and -1.0 < self.rho < 1.0):
            raise InvalidInputError(f"need finite beta and |rho| < 1, got beta={self.beta}, rho={self.rho}")

    @property
    def has_covariate(self) -> bool:
        return self.variant == "covariate"

    def replace(self, **kw) -> "DgpSpec":
        return DgpSpec(**{**asdict(self), **kw})


@dataclass(frozen=True)
class OracleResult:
    tau: float
    y_tau: float
    f_y_tau: float
    pi_tau: float
    a_tau: float = float("nan")
    b1_tau: float = float("nan")
    b2_tau: float = float("nan")

    @property
    def bias(self) -> float:
        return self.a_tau - self.pi_tau

    def as_row(self) -> dict:
        return {"tau": self.tau, "y_tau": self.y_tau, "f_y": self.f_y_tau, "pi": self.pi_tau,
                "a": self.a_tau, "b1": self.b1_tau, "b2": self.b2_tau, "b": self.bias}


# ---------------------------------------------------------------- sampling

def generate_sample(spec: DgpSpec, n: int, rng: np.random.Generator | None = None, debug: bool = False):
    """Draw ``n`` observations. With ``debug`` also return the latent draws.

    Latent errors are built as ``U_d = rho V + sqrt(1 - rho^2) e_d`` with
    independent ``e_0, e_1``; each pair ``(U_d, V)`` is standard bivariate
    normal with correlation ``rho`` for every ``|rho| < 1``.

    ``latent="clipped"`` instead draws ``(U0, U1, V)`` from the symmetric
    square root of ``[[1, 0, rho], [0, 1, rho], [rho, rho, 1]]`` with negative
    eigenvalues set to zero. For ``rho^2 > 1/2`` that matrix is indefinite and
    the draws no longer have correlation ``rho``; the oracle does not model
    this case. It exists to study samplers that silently repair the matrix.
    """
    if int(n) != n or n < 1:
        raise InvalidInputError(f"n must be a positive integer, got {n}")
    n = int(n)
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    z = rng.standard_normal(n)
    x = rng.standard_normal(n) if spec.has_covariate else np.zeros(n)
    if spec.latent == "clipped":
        u0, u1, v = _clipped_root(spec.rho) @ rng.standard_normal((3, n))
    else:
        v = rng.standard_normal(n)
        e = rng.standard_normal((2, n))
        s = math.sqrt(1.0 - spec.rho**2)
        u0 = spec.rho * v + s * e[0]
        u1 = spec.rho * v + s * e[1]
    d = (v <= z + x).astype(np.float64)
    y = x + np.where(d == 1.0, spec.beta + u1, u0)
    data = Dataset(y=y, d=d, z=z, x=x[:, None] if spec.has_covariate else None)
    if debug:
        return data, {"u0": u0, "u1": u1, "v": v, "z": z, "x": x}
    return data


def _clipped_root(rho: float) -> np.ndarray:
    sigma = np.array([[1.0, 0.0, rho], [0.0, 1.0, rho], [rho, rho, 1.0]])
    ev, vec = np.linalg.eigh(sigma)
    return (vec * np.sqrt(np.clip(ev, 0.0, None))) @ vec.T


# ---------------------------------------------------------------- oracle

@dataclass(frozen=True)
class _Reduced:
    """Law of (index m, outcome shifter) for one design.

    ``m ~ N(0, sm^2)`` and, given ``V = v`` and ``m``, ``U_d + q(X)`` is normal
    with mean ``kappa m + rho v`` and standard deviation ``sig``.
    """

    beta: float
    rho: float
    sm: float
    kappa: float
    sig: float

    @classmethod
    def of(cls, spec: DgpSpec) -> "_Reduced":
        s2 = 1.0 - spec.rho**2
        if spec.has_covariate:
            # X | m ~ N(m/2, 1/2) for m = Z + X
            return cls(spec.beta, spec.rho, math.sqrt(2.0), 0.5, math.sqrt(s2 + 0.5))
        return cls(spec.beta, spec.rho, 1.0, 0.0, math.sqrt(s2))

    @property
    def pdot_scale(self) -> float:
        # 1 / E[phi(m)] for m ~ N(0, sm^2)
        return math.sqrt(2.0 * math.pi * (1.0 + self.sm**2))


def _phi(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


class _Grid:
    """Outer nodes in m and inner nodes in v on both sides of each m."""

    def __init__(self, r: _Reduced, panels: int):
        t, wt = gl_rule(-SPAN, SPAN, panels)
        self.r = r
        self.m = r.sm * t
        self.wm = wt * _phi(t)
        m = self.m[:, None]
        self.v_hi, w_hi = gl_rule(self.m, np.maximum(self.m, 0.0) + SPAN, panels)
        self.v_lo, w_lo = gl_rule(np.minimum(self.m, 0.0) - SPAN, self.m, panels)
        self.w_hi = w_hi * _phi(self.v_hi)
        self.w_lo = w_lo * _phi(self.v_lo)
        self.mass_hi = self.w_hi.sum(axis=1)  # Pr(V > m) under the same rule
        self.mass_lo = self.w_lo.sum(axis=1)
        self.pdot = _phi(self.m) * r.pdot_scale
        self._m = m

    def mean_shift(self, v):
        return self.r.kappa * self._m + self.r.rho * v

    def joint(self, y, fn):
        """``int f(m) [ int_{v>m} fn(y) + int_{v<=m} fn(y - beta) ]`` over m."""
        r = self.r
        hi = np.sum(self.w_hi * fn((y - self.mean_shift(self.v_hi)) / r.sig), axis=1)
        lo = np.sum(self.w_lo * fn((y - r.beta - self.mean_shift(self.v_lo)) / r.sig), axis=1)
        return hi, lo

    def cdf(self, y) -> float:
        hi, lo = self.joint(y, special.ndtr)
        return float(np.sum(self.wm * (hi + lo)))

    def pdf(self, y) -> float:
        hi, lo = self.joint(y, _phi)
        return float(np.sum(self.wm * (hi + lo)) / self.r.sig)

    def branch_cdfs(self, y):
        """F_{Y|D=0,m}(y) and F_{Y|D=1,m}(y) on the outer nodes."""
        hi, lo = self.joint(y, special.ndtr)
        return hi / self.mass_hi, lo / self.mass_lo

    def marginal_cdfs(self, y):
        """F_{Y(0)|V=m,m}(y) and F_{Y(1)|V=m,m}(y)."""
        r = self.r
        centre = (r.kappa + r.rho) * self.m
        return special.ndtr((y - centre) / r.sig), special.ndtr((y - r.beta - centre) / r.sig)


@lru_cache(maxsize=256)
def _grid(r: _Reduced, panels: int) -> _Grid:
    return _Grid(r, panels)


def _quantile(g: _Grid, tau: float) -> float:
    lo, hi = ROOT_BRACKET
    f_lo, f_hi = g.cdf(lo) - tau, g.cdf(hi) - tau
    if not (f_lo < 0.0 < f_hi):
        raise QuadratureFailure(f"quantile {tau} is not bracketed by {ROOT_BRACKET}")
    return optimize.brentq(lambda y: g.cdf(y) - tau, lo, hi, xtol=1e-10, rtol=4 * np.finfo(float).eps)


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise InvalidInputError(f"tau must lie in (0, 1), got {tau}")
    return tau


def _all_terms(spec: DgpSpec, tau: float, panels: int) -> np.ndarray:
    g = _grid(_Reduced.of(spec), panels)
    y = _quantile(g, tau)
    f = g.pdf(y)
    f0, f1 = g.branch_cdfs(y)
    g0, g1 = g.marginal_cdfs(y)
    pi = np.sum(g.wm * (g0 - g1) * g.pdot) / f
    a = np.sum(g.wm * (f0 - f1)) / f
    b1 = np.sum(g.wm * (f0 - f1) * (1.0 - g.pdot)) / f
    b2 = np.sum(g.wm * ((f0 - g0) + (g1 - f1)) * g.pdot) / f
    return np.array([y, f, pi, a, b1, b2])


def _oracle(spec: DgpSpec, tau: float) -> OracleResult:
    tau = _check_tau(tau)
    vals, _ = refine(lambda p: _all_terms(spec, tau, p), panels=2, tol=1e-11)
    y, f, pi, a, b1, b2 = (float(v) for v in vals)
    if spec.beta == 0.0:
        pi = 0.0  # the two marginal CDFs coincide
    if spec.rho == 0.0:
        b2 = 0.0  # outcome errors independent of V: selection leaves each arm's CDF unchanged
    return OracleResult(tau=tau, y_tau=y, f_y_tau=f, pi_tau=pi, a_tau=a, b1_tau=b1, b2_tau=b2)


def true_uqe(spec: DgpSpec, tau: float) -> OracleResult:
    """Quantile effect with y_tau and f_Y(y_tau); bias fields are left NaN."""
    full = _oracle(spec, tau)
    return OracleResult(tau=full.tau, y_tau=full.y_tau, f_y_tau=full.f_y_tau, pi_tau=full.pi_tau)


def apparent_effect(spec: DgpSpec, tau: float) -> float:
    """Probability limit of the unconditional quantile regression that treats D as exogenous."""
    return _oracle(spec, tau).a_tau


def bias_decomposition(spec: DgpSpec, tau: float) -> OracleResult:
    res = _oracle(spec, tau)
    gap = (res.a_tau - res.pi_tau) - (res.b1_tau + res.b2_tau)
    if abs(gap) > IDENTITY_TOL:
        raise InternalConsistencyError(f"A - Pi and B1 + B2 differ by {gap:.3g} at tau={tau}")
    return res


def bias_curve(variant: str, beta: float, tau_grid, rho_list) -> list[dict]:
    rows = []
    for rho in rho_list:
        spec = DgpSpec(variant=variant, beta=beta, rho=float(rho))
        for tau in tau_grid:
            res = bias_decomposition(spec, float(tau))
            rows.append({"rho": float(rho), **res.as_row()})
    return rows


def cdf_y(spec: DgpSpec, y, panels: int = 8):
    g = _grid(_Reduced.of(spec), panels)
    y_arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
    out = np.array([g.cdf(v) for v in y_arr])
    return float(out[0]) if np.ndim(y) == 0 else out


def pdf_y(spec: DgpSpec, y, panels: int = 8) -> float:
    return _grid(_Reduced.of(spec), panels).pdf(float(y))


def pdot_mass(spec: DgpSpec, panels: int = 8) -> float:
    """Quadrature of the marginal-population weight against the index law; equals 1."""
    g = _grid(_Reduced.of(spec), panels)
    return float(np.sum(g.wm * g.pdot))


def t1_true(spec: DgpSpec) -> float:
    """E[dP/dz1] = E[phi(mu(W))] in closed form."""
    return 1.0 / _Reduced.of(spec).pdot_scale


def t2_true(spec: DgpSpec, tau: float) -> float:
    """Population average derivative T2 = -Pi * f_Y(y_tau) * T1."""
    res = true_uqe(spec, tau)
    return -res.pi_tau * res.f_y_tau * t1_true(spec)


def cond_density_deriv_true(spec: DgpSpec, y: float, panels: int = 8) -> float:
    """E[d f_{Y|W~}(y) / dz1]: dP/dz1 times the jump in the conditional density at V = m."""
    r = _Reduced.of(spec)
    g = _grid(r, panels)
    centre = (r.kappa + r.rho) * g.m
    jump = (_phi((y - r.beta - centre) / r.sig) - _phi((y - centre) / r.sig)) / r.sig
    return float(np.sum(g.wm * _phi(g.m) * jump))
