"""Univariate building blocks: quantiles, Gaussian kernel, KDE and bandwidths."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import InvalidInputError

SQRT_2PI = np.sqrt(2.0 * np.pi)


def as_sample(values) -> np.ndarray:
    """Validate and return a 1-D float64 array of finite values."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise InvalidInputError("sample is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("sample contains non-finite values")
    return arr


@dataclass(frozen=True)
class GaussianKernel:
    """Standard normal kernel and its first two derivatives."""

    name: str = "gaussian"

    def __call__(self, u, order: int = 0):
        return kernel_eval(self, u, order)

    @property
    def second_moment(self) -> float:
        return 1.0

    @property
    def roughness(self) -> float:
        # integral of K^2
        return 1.0 / (2.0 * np.sqrt(np.pi))


GAUSSIAN = GaussianKernel()


def kernel_eval(kernel: GaussianKernel, u, order: int = 0):
    u = np.asarray(u, dtype=np.float64)
    k = np.exp(-0.5 * u * u) / SQRT_2PI
    if order == 0:
        return k
    if order == 1:
        return -u * k
    if order == 2:
        return (u * u - 1.0) * k
    raise InvalidInputError(f"kernel derivative order must be 0, 1 or 2, got {order}")


def empirical_quantile(sample, tau: float) -> float:
    """Left-continuous inverse of the empirical CDF: inf{y : F_n(y) >= tau}."""
    y = as_sample(sample)
    if not 0.0 < tau < 1.0:
        raise InvalidInputError(f"tau must lie in (0, 1), got {tau}")
    ys = np.sort(y)
    n = ys.size
    # smallest k (1-based) with k/n >= tau, compared exactly in rationals
    k = min(max(math.ceil(Fraction(tau) * n), 1), n)
    return float(ys[k - 1])


def _check_h(h: float) -> float:
    h = float(h)
    if not (h > 0.0 and np.isfinite(h)):
        raise InvalidInputError(f"bandwidth must be positive and finite, got {h}")
    return h


def _kernel_mean(data, y, h, order):
    y_arr = np.asarray(y, dtype=np.float64)
    flat = y_arr.reshape(-1)
    out = np.empty(flat.size)
    # bound the (points x sample) temporary to ~4e6 entries
    step = max(1, 4_000_000 // data.size)
    for start in range(0, flat.size, step):
        u = (data[None, :] - flat[start:start + step, None]) / h
        out[start:start + step] = kernel_eval(GAUSSIAN, u, order).mean(axis=1)
    return y_arr, out


def kde(sample, y, h: float):
    """Gaussian kernel density estimate ``n^-1 sum K_h(Y_i - y)`` at ``y``.

    ``y`` may be a scalar or an array; the result has the same shape.
    """
    data = as_sample(sample)
    h = _check_h(h)
    y_arr, out = _kernel_mean(data, y, h, 0)
    out /= h
    return float(out[0]) if y_arr.ndim == 0 else out.reshape(y_arr.shape)


def kde_derivative(sample, y, h: float):
    """Derivative in ``y`` of :func:`kde`: ``-(n h^2)^-1 sum K'((Y_i - y)/h)``."""
    data = as_sample(sample)
    h = _check_h(h)
    y_arr, out = _kernel_mean(data, y, h, 1)
    out /= -(h * h)
    return float(out[0]) if y_arr.ndim == 0 else out.reshape(y_arr.shape)


def silverman(sample) -> float:
    """Silverman's rule of thumb, ``1.06 * sd * n^(-1/5)`` (sd with n-1 denominator)."""
    data = as_sample(sample)
    n = data.size
    if n < 2:
        raise InvalidInputError("Silverman's rule needs at least two observations")
    sd = float(np.std(data, ddof=1))
    if not sd > 0.0:
        raise InvalidInputError("sample has zero variance")
    return 1.06 * sd * n ** (-0.2)


@dataclass(frozen=True)
class BandwidthRule:
    """Either Silverman's rule or a fixed bandwidth.

    ``exponent`` rescales Silverman's h by ``n^(1/5 - 1/exponent)`` so that
    ``h ~ n^(-1/exponent)``. Values above 5 undersmooth; 5 is the plain rule.
    """

    rule: str = "silverman"
    h: float | None = None
    exponent: float = 5.0

    def __post_init__(self):
        if self.rule not in ("silverman", "fixed"):
            raise InvalidInputError(f"unknown bandwidth rule {self.rule!r}")
        if self.rule == "fixed":
            _check_h(self.h if self.h is not None else -1.0)
        if not self.exponent > 0:
            raise InvalidInputError("bandwidth exponent must be positive")

    @classmethod
    def parse(cls, text: Union[str, "BandwidthRule"]) -> "BandwidthRule":
        """Parse ``silverman`` or ``fixed:<h>``."""
        if isinstance(text, BandwidthRule):
            return text
        text = str(text).strip().lower()
        if text == "silverman":
            return cls()
        if text.startswith("fixed:"):
            try:
                value = float(text.split(":", 1)[1])
            except ValueError as exc:
                raise InvalidInputError(f"bad fixed bandwidth {text!r}") from exc
            return cls(rule="fixed", h=value)
        raise InvalidInputError(f"bandwidth must be 'silverman' or 'fixed:<h>', got {text!r}")

    def __str__(self) -> str:
        return "silverman" if self.rule == "silverman" else f"fixed:{self.h:g}"

    def evaluate(self, sample) -> float:
        if self.rule == "fixed":
            return float(self.h)
        data = as_sample(sample)
        h = silverman(data)
        if self.exponent != 5.0:
            h *= data.size ** (0.2 - 1.0 / self.exponent)
        return h


def quantile_influence(y, y_tau: float, f_hat: float, tau: float):
    """Influence function of the sample quantile, ``(tau - 1{y <= y_tau}) / f``."""
    if not f_hat > 0.0:
        raise InvalidInputError(f"density at the quantile must be positive, got {f_hat}")
    y = np.asarray(y, dtype=np.float64)
    out = (tau - (y <= y_tau)) / f_hat
    return float(out) if out.ndim == 0 else out
