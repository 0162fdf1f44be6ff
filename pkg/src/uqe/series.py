"""Polynomial series regression with an optional ridge penalty.

Basis functions are plain monomials in a coordinate vector whose first entry
is the one that gets differentiated (the propensity score ``p`` in the outcome
regression, ``z1`` in the series propensity score).  Columns are centred and
scaled before solving; the penalty is expressed on the raw monomial
coefficients, so the scaling never changes the estimator.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg

from .errors import EstimationFailure, InvalidInputError

COND_LIMIT = 1e-12


@dataclass(frozen=True)
class BasisSpec:
    degree: int = 3
    interactions: bool = True
    lam: float = 0.0

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise InvalidInputError(f"basis degree must be a positive integer, got {self.degree}")
        if not self.lam >= 0.0:
            raise InvalidInputError(f"ridge penalty must be nonnegative, got {self.lam}")

    def exponents(self, n_coords: int) -> np.ndarray:
        return _exponents(int(self.degree), bool(self.interactions), int(n_coords))

    def dimension(self, n_coords: int) -> int:
        return self.exponents(n_coords).shape[0]


@lru_cache(maxsize=64)
def _exponents(degree: int, interactions: bool, k: int) -> np.ndarray:
    rows = [(0,) * k]
    if interactions:
        for total in range(1, degree + 1):
            # reverse-lexicographic so the first coordinate's pure power leads
            combos = [e for e in itertools.product(range(total + 1), repeat=k) if sum(e) == total]
            rows.extend(sorted(combos, reverse=True))
    else:
        for j in range(k):
            for power in range(1, degree + 1):
                e = [0] * k
                e[j] = power
                rows.append(tuple(e))
    out = np.array(rows, dtype=np.int64).reshape(len(rows), k)
    out.setflags(write=False)
    return out


def _coords(p, x=None) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    first = p.reshape(-1, 1)
    if x is None:
        return first
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return first
    x = x.reshape(first.shape[0], -1)
    return np.hstack([first, x])


def design_matrix(basis: BasisSpec, coords: np.ndarray) -> np.ndarray:
    """Monomials of each row of ``coords`` (n x k); column 0 is the constant."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    exps = basis.exponents(coords.shape[1])
    return np.prod(coords[:, None, :] ** exps[None, :, :], axis=2)


def design_dfirst(basis: BasisSpec, coords: np.ndarray) -> np.ndarray:
    """Derivative of :func:`design_matrix` with respect to the first coordinate."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    exps = basis.exponents(coords.shape[1])
    lowered = exps.copy()
    lowered[:, 0] = np.maximum(lowered[:, 0] - 1, 0)
    mono = np.prod(coords[:, None, :] ** lowered[None, :, :], axis=2)
    return mono * exps[None, :, 0]


def design_row(basis: BasisSpec, p: float, x=None) -> np.ndarray:
    return design_matrix(basis, _coords(p, x))[0]


class _Projector:
    """Factorised penalised normal equations for one design matrix."""

    def __init__(self, rows: np.ndarray, lam: float):
        rows = np.asarray(rows, dtype=np.float64)
        n, J = rows.shape
        if not np.allclose(rows[:, 0], 1.0):
            raise InvalidInputError("first design column must be the constant 1")
        self.n, self.J, self.lam = n, J, float(lam)
        self.center = rows[:, 1:].mean(axis=0)
        scale = rows[:, 1:].std(axis=0)
        if np.any(~(scale > 0.0)):
            bad = [int(j) + 1 for j in np.flatnonzero(~(scale > 0.0))]
            raise EstimationFailure(
                f"series design with J={J} has constant non-intercept columns {bad}",
                {"basis_dimension": J, "constant_columns": bad},
            )
        self.scale = scale
        self.std_rows = self.standardize(rows)
        normal = self.std_rows.T @ self.std_rows / n
        penalty = np.concatenate([[0.0], 1.0 / scale**2])
        normal[np.diag_indices(J)] += self.lam * penalty
        eig = np.linalg.eigvalsh(normal)
        if not (eig[0] > COND_LIMIT * eig[-1]):
            raise EstimationFailure(
                f"series normal matrix with J={J} is singular "
                f"(eigenvalue ratio {eig[0] / eig[-1]:.3g})",
                {"basis_dimension": J, "min_eig": float(eig[0]), "max_eig": float(eig[-1])},
            )
        self.chol = linalg.cho_factor(normal, lower=True, check_finite=False)

    def standardize(self, rows: np.ndarray) -> np.ndarray:
        out = np.array(rows, dtype=np.float64, copy=True)
        out[:, 1:] = (out[:, 1:] - self.center) / self.scale
        return out

    def standardize_derivative(self, drows: np.ndarray) -> np.ndarray:
        out = np.array(drows, dtype=np.float64, copy=True)
        out[:, 0] = 0.0
        out[:, 1:] /= self.scale
        return out

    def solve_std(self, rhs: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self.chol, rhs, check_finite=False)

    def coefficients(self, targets: np.ndarray) -> np.ndarray:
        """Raw-scale coefficients for one target (n,) or several (n, m)."""
        targets = np.asarray(targets, dtype=np.float64)
        c = self.solve_std(self.std_rows.T @ targets / self.n)
        b = np.array(c, copy=True)
        b[1:] = c[1:] / (self.scale if c.ndim == 1 else self.scale[:, None])
        b[0] = c[0] - self.center @ b[1:]
        return b


@dataclass(frozen=True)
class SeriesFit:
    b: np.ndarray
    gram: np.ndarray
    lam: float
    basis: BasisSpec | None = None
    _proj: _Projector | None = field(default=None, repr=False, compare=False)

    @property
    def dimension(self) -> int:
        return self.b.shape[0]

    def refit(self, target) -> "SeriesFit":
        """Same design and penalty, new regression target."""
        b = self._proj.coefficients(target)
        return SeriesFit(b=b, gram=self.gram, lam=self.lam, basis=self.basis, _proj=self._proj)

    def fitted(self) -> np.ndarray:
        # std rows reproduce the raw fitted values through the centred coefficients
        c = np.array(self.b, copy=True)
        c[1:] = self.b[1:] * self._proj.scale
        c[0] = self.b[0] + self._proj.center @ self.b[1:]
        return self._proj.std_rows @ c

    def projection_of_derivative(self, drows: np.ndarray) -> np.ndarray:
        """``phi_i' (n^-1 Phi'Phi + lam I~)^-1 n^-1 sum_l dphi_l`` for every i.

        With ``drows`` the derivative of the design in the intervention
        coordinate, minus this quantity is the series estimate of the
        conditional mean of the log-density derivative (integration by parts).
        """
        dstd = self._proj.standardize_derivative(drows)
        coef = self._proj.solve_std(dstd.mean(axis=0))
        return self._proj.std_rows @ coef


def ridge_fit(rows, target, lam: float = 0.0, basis: BasisSpec | None = None) -> SeriesFit:
    """Penalised least squares ``(n^-1 Phi'Phi + lam I~)^-1 n^-1 Phi'target``.

    The first column of ``rows`` must be the constant, which is not penalised.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    target = np.asarray(target, dtype=np.float64)
    if rows.shape[0] != target.shape[0]:
        raise InvalidInputError("design rows and target have different lengths")
    n, J = rows.shape
    if J == 1:
        # constant-only basis: projection on the constant is the mean
        b = np.array([target.mean(axis=0)]) if target.ndim == 1 else target.mean(axis=0)[None, :]
        return SeriesFit(b=b, gram=rows.T @ rows, lam=float(lam), basis=basis,
                         _proj=_ConstantProjector(n))
    proj = _Projector(rows, lam)
    b = proj.coefficients(target)
    return SeriesFit(b=b, gram=rows.T @ rows, lam=float(lam), basis=basis, _proj=proj)


class _ConstantProjector:
    def __init__(self, n: int):
        self.n, self.J = n, 1
        self.center = np.zeros(0)
        self.scale = np.zeros(0)
        self.std_rows = np.ones((n, 1))

    def coefficients(self, targets):
        targets = np.asarray(targets, dtype=np.float64)
        return targets.mean(axis=0)[None, ...] if targets.ndim > 1 else np.array([targets.mean()])

    def standardize_derivative(self, drows):
        return np.zeros_like(np.asarray(drows, dtype=np.float64))

    def solve_std(self, rhs):
        return np.asarray(rhs, dtype=np.float64)


def check_dimension(J: int, n: int) -> None:
    if J > n / 10:
        raise InvalidInputError(f"basis dimension J={J} exceeds the n/10 guardrail for n={n}")


def fit_series(basis: BasisSpec, coords, target) -> SeriesFit:
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    rows = design_matrix(basis, coords)
    check_dimension(rows.shape[1], rows.shape[0])
    return ridge_fit(rows, target, basis.lam, basis=basis)


def predict(fit: SeriesFit, p, x=None):
    coords = _coords(p, x)
    out = design_matrix(fit.basis, coords) @ fit.b
    return float(out[0]) if np.ndim(p) == 0 else out


def dpredict_dz1(fit: SeriesFit, p, x=None, dp_dz1=1.0):
    """``(d phi / d p)' b * dP/dz1``: the z1-derivative through the propensity score."""
    coords = _coords(p, x)
    out = (design_dfirst(fit.basis, coords) @ fit.b) * np.asarray(dp_dz1, dtype=np.float64).reshape(-1)
    return float(out[0]) if np.ndim(p) == 0 else out


def log_density_deriv_projection(data, ps, basis: BasisSpec) -> np.ndarray:
    """Series estimate of E[d log f_W(W) / dz1 | P(W), X] at each observation.

    Integration by parts turns the projection of the score into
    ``-phi_i' (n^-1 Phi'Phi + lam I~)^-1 n^-1 sum_l d phi_l / dz1``, where the
    z1-derivative of the basis runs through the propensity score.
    """
    from .propensity import dP_dz1, propensity

    p = propensity(ps, data.z, data.x)
    coords = _coords(p, data.x)
    rows = design_matrix(basis, coords)
    check_dimension(rows.shape[1], rows.shape[0])
    drows = design_dfirst(basis, coords) * np.asarray(dP_dz1(ps, data.z, data.x))[:, None]
    fit = ridge_fit(rows, np.zeros(rows.shape[0]), basis.lam, basis=basis)
    return -fit.projection_of_derivative(drows)
