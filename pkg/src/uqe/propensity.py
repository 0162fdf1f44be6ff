"""Propensity score models: linear-index logit/probit by maximum likelihood,
and a series (polynomial least-squares) alternative."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .data import Dataset
from .errors import EstimationFailure, SeparationError, UnsupportedOperationError, InvalidInputError
from .series import BasisSpec, SeriesFit, design_dfirst, design_matrix, fit_series

log = logging.getLogger(__name__)

GRAD_TOL = 1e-8
MAX_ITER = 100
SEPARATION_NORM = 50.0
CLAMP = 1e-6
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class Link:
    name = ""

    def cdf(self, t):
        raise NotImplementedError

    def pdf(self, t):
        raise NotImplementedError

    def dpdf(self, t):
        raise NotImplementedError


class Probit(Link):
    name = "probit"

    def cdf(self, t):
        return special.ndtr(t)

    def pdf(self, t):
        return np.exp(-0.5 * t * t - _LOG_SQRT_2PI)

    def dpdf(self, t):
        return -t * self.pdf(t)

    def loglik_terms(self, t, d):
        q = 2.0 * d - 1.0
        return special.log_ndtr(q * t)

    def score_weight(self, t, d):
        # d log-lik / d t, via the inverse Mills ratio on the log scale
        q = 2.0 * d - 1.0
        return q * np.exp(-0.5 * t * t - _LOG_SQRT_2PI - special.log_ndtr(q * t))

    def hess_weight(self, t, d):
        lam = self.score_weight(t, d)
        return -lam * (lam + t)

    def info_weight(self, t):
        # pdf^2 / (cdf (1 - cdf)), computed in logs to survive the tails
        return np.exp(-t * t - 2.0 * _LOG_SQRT_2PI - special.log_ndtr(t) - special.log_ndtr(-t))


class Logit(Link):
    name = "logit"

    def cdf(self, t):
        return special.expit(t)

    def pdf(self, t):
        p = special.expit(t)
        return p * (1.0 - p)

    def dpdf(self, t):
        p = special.expit(t)
        return p * (1.0 - p) * (1.0 - 2.0 * p)

    def loglik_terms(self, t, d):
        return d * special.log_expit(t) + (1.0 - d) * special.log_expit(-t)

    def score_weight(self, t, d):
        return d - special.expit(t)

    def hess_weight(self, t, d):
        return -self.pdf(t)

    def info_weight(self, t):
        return self.pdf(t)


LINKS = {"probit": Probit(), "logit": Logit()}


@dataclass(frozen=True, eq=False)
class PsModel:
    kind: str
    alpha: np.ndarray | None = None
    fit: SeriesFit | None = None
    n_z: int = 1
    diagnostics: dict = field(default_factory=dict)

    @property
    def link(self) -> Link:
        if self.kind not in LINKS:
            raise UnsupportedOperationError(f"{self.kind} propensity model has no link function")
        return LINKS[self.kind]

    @property
    def parametric(self) -> bool:
        return self.kind in LINKS


def _index_rows(z: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((z.shape[0], 1)), z, x])


def fit_mle(data: Dataset, link: str = "probit") -> PsModel:
    """Newton-Raphson with step halving on the Bernoulli log-likelihood.

    Convergence is declared when the max-norm of the average score drops to
    ``GRAD_TOL``. An index coefficient above ``SEPARATION_NORM`` in absolute
    value is treated as (quasi-)separation.
    """
    if link not in LINKS:
        raise InvalidInputError(f"unknown link {link!r}")
    L = LINKS[link]
    W = data.w_bar
    d = data.d
    n, k = W.shape
    if n < k + 1:
        raise InvalidInputError(f"{n} observations cannot identify {k} index coefficients")

    alpha = np.zeros(k)
    # start from the intercept matching the treated share
    share = d.mean()
    alpha[0] = special.ndtri(share) if link == "probit" else special.logit(share)
    t = W @ alpha
    ll = L.loglik_terms(t, d).mean()
    grad_norm = np.inf
    halvings_total = 0
    for it in range(1, MAX_ITER + 1):
        grad = W.T @ L.score_weight(t, d) / n
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= GRAD_TOL:
            break
        hess = (W * L.hess_weight(t, d)[:, None]).T @ W / n
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError as exc:
            raise EstimationFailure("singular Hessian in propensity MLE",
                                    {"iterations": it, "grad_norm": grad_norm}) from exc
        scale = 1.0
        for _ in range(40):
            cand = alpha + scale * step
            t_c = W @ cand
            ll_c = L.loglik_terms(t_c, d).mean()
            if np.isfinite(ll_c) and ll_c > ll:
                break
            scale *= 0.5
            halvings_total += 1
        else:
            # no ascent possible at double precision: accept current point if stationary enough
            if grad_norm <= 1e3 * GRAD_TOL:
                break
            raise EstimationFailure("propensity MLE step halving failed",
                                    {"iterations": it, "grad_norm": grad_norm, "alpha": alpha.tolist()})
        alpha, t, ll = cand, t_c, ll_c
        if np.max(np.abs(alpha)) > SEPARATION_NORM:
            raise SeparationError("index coefficients diverge: likely perfect separation",
                                  {"iterations": it, "alpha": alpha.tolist(), "grad_norm": grad_norm})
    else:
        raise EstimationFailure("propensity MLE did not converge",
                                {"iterations": MAX_ITER, "grad_norm": grad_norm, "alpha": alpha.tolist()})
    return PsModel(kind=link, alpha=alpha, n_z=data.z.shape[1],
                   diagnostics={"iterations": it, "grad_norm": grad_norm, "loglik": float(ll * n),
                                "halvings": halvings_total})


def _ps_coords(z, x=None) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if x is None or np.size(x) == 0:
        return z
    return np.hstack([z, np.asarray(x, dtype=np.float64).reshape(z.shape[0], -1)])


def fit_series_ps(data: Dataset, basis: BasisSpec = BasisSpec(3)) -> PsModel:
    """Least-squares projection of D on a polynomial basis in (z, x)."""
    fit = fit_series(basis, data.w, data.d)
    raw = fit.fitted()
    clamped = float(np.mean((raw < CLAMP) | (raw > 1.0 - CLAMP)))
    if clamped > 0:
        log.debug("series propensity clamped at %.2f%% of sample points", 100 * clamped)
    return PsModel(kind="series", fit=fit, n_z=data.z.shape[1],
                   diagnostics={"clamp_rate": clamped, "basis_dimension": fit.dimension})


def _rows(model: PsModel, z, x):
    """Normalise (z, x) input into a 2-D (n, n_z) and (n, n_x) pair."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 0:
        z = z.reshape(1, 1)
    elif z.ndim == 1:
        z = z.reshape(-1, 1) if model.n_z == 1 else z.reshape(1, -1)
    n = z.shape[0]
    if x is None or np.size(x) == 0:
        x = np.zeros((n, 0))
    else:
        x = np.asarray(x, dtype=np.float64).reshape(n, -1)
    return z, x


def propensity(model: PsModel, z, x=None):
    z2, x2 = _rows(model, z, x)
    if model.parametric:
        t = _index_rows(z2, x2) @ model.alpha
        out = model.link.cdf(t)
    else:
        out = np.clip(design_matrix(model.fit.basis, _ps_coords(z2, x2)) @ model.fit.b, CLAMP, 1 - CLAMP)
    return float(out[0]) if np.ndim(z) == 0 else out


def dP_dz1(model: PsModel, z, x=None):
    z2, x2 = _rows(model, z, x)
    if model.parametric:
        t = _index_rows(z2, x2) @ model.alpha
        out = model.link.pdf(t) * model.alpha[1]
    else:
        coords = _ps_coords(z2, x2)
        raw = design_matrix(model.fit.basis, coords) @ model.fit.b
        out = design_dfirst(model.fit.basis, coords) @ model.fit.b
        out = np.where((raw < CLAMP) | (raw > 1 - CLAMP), 0.0, out)
    return float(out[0]) if np.ndim(z) == 0 else out


def d2P_dz1_dalpha(model: PsModel, z, x=None):
    """Gradient in the index coefficients of dP/dz1 (rows: observations)."""
    if not model.parametric:
        raise UnsupportedOperationError("d2P/dz1 dalpha is only defined for parametric propensity scores")
    z2, x2 = _rows(model, z, x)
    W = _index_rows(z2, x2)
    t = W @ model.alpha
    out = model.link.dpdf(t)[:, None] * model.alpha[1] * W
    out[:, 1] += model.link.pdf(t)
    return out[0] if np.ndim(z) == 0 else out


def information(model: PsModel, data: Dataset) -> np.ndarray:
    W = data.w_bar
    t = W @ model.alpha
    return (W * model.link.info_weight(t)[:, None]).T @ W / data.n


def mle_influence(model: PsModel, data: Dataset) -> np.ndarray:
    """Per-observation influence of the MLE: information^-1 times the score.

    The information matrix is the average of ``L'(t)^2 w w' / (P (1 - P))``.
    """
    if not model.parametric:
        raise UnsupportedOperationError("MLE influence requires a parametric propensity score")
    W = data.w_bar
    t = W @ model.alpha
    info = information(model, data)
    score = W * model.link.score_weight(t, data.d)[:, None]
    try:
        return np.linalg.solve(info, score.T).T
    except np.linalg.LinAlgError as exc:
        raise EstimationFailure("singular information matrix in MLE influence",
                                {"alpha": model.alpha.tolist()}) from exc


def fit_propensity(data: Dataset, kind: str, basis: BasisSpec | None = None) -> PsModel:
    if kind in LINKS:
        return fit_mle(data, kind)
    if kind == "series":
        return fit_series_ps(data, basis or BasisSpec(3))
    raise InvalidInputError(f"unknown propensity model {kind!r}")
