"""Composite Gauss-Legendre rules on (possibly per-row) finite intervals."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import QuadratureFailure

ORDER = 64
_X, _W = np.polynomial.legendre.leggauss(ORDER)


def gl_rule(a, b, panels: int):
    """Nodes and weights of a composite rule with ``panels`` equal panels.

    ``a`` and ``b`` broadcast together; the returned arrays have one extra
    trailing axis of length ``panels * ORDER``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a, b = np.broadcast_arrays(a, b)
    width = (b - a) / panels
    left = a[..., None] + width[..., None] * np.arange(panels)
    half = 0.5 * width[..., None, None]
    nodes = left[..., None] + half * (_X + 1.0)
    weights = np.broadcast_to(half * _W, nodes.shape)
    shape = a.shape + (panels * ORDER,)
    return nodes.reshape(shape), np.array(weights).reshape(shape)


def integrate(f: Callable, a: float, b: float, panels: int = 4) -> float:
    x, w = gl_rule(a, b, panels)
    return float(np.sum(w * f(x)))


def refine(fn: Callable[[int], np.ndarray], panels: int = 2, tol: float = 1e-10,
           max_panels: int = 64) -> tuple[np.ndarray, int]:
    """Double the panel count until all outputs of ``fn(panels)`` settle to ``tol``."""
    prev = np.asarray(fn(panels), dtype=np.float64)
    while panels < max_panels:
        panels *= 2
        cur = np.asarray(fn(panels), dtype=np.float64)
        if np.all(np.abs(cur - prev) <= tol * np.maximum(1.0, np.abs(cur))):
            return cur, panels
        prev = cur
    raise QuadratureFailure(f"quadrature did not settle to {tol:g} with {max_panels} panels")
