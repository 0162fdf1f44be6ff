from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed sample (Y, D, Z, X); column 0 of ``z`` is the intervention coordinate."""

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).ravel()
        n = y.size
        d = np.asarray(self.d, dtype=np.float64).ravel()
        z = np.asarray(self.z, dtype=np.float64).reshape(n, -1) if n else np.zeros((0, 1))
        x = np.asarray(self.x if self.x is not None else np.zeros((n, 0)), dtype=np.float64)
        x = x.reshape(n, -1) if x.size else np.zeros((n, 0))
        if d.size != n:
            raise InvalidInputError("y and d have different lengths")
        if z.shape[1] < 1:
            raise InvalidInputError("at least one instrument column is required")
        if n < 10:
            raise InvalidInputError(f"need at least 10 observations, got {n}")
        for name, arr in (("y", y), ("d", d), ("z", z), ("x", x)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} contains non-finite values")
        if not np.all((d == 0.0) | (d == 1.0)):
            raise InvalidInputError("d must be binary (0/1)")
        if d.min() == d.max():
            raise InvalidInputError("d has no variation: all observations share one treatment status")
        for name, arr in (("y", y), ("d", d), ("z", z), ("x", x)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def w(self) -> np.ndarray:
        """Stacked (z, x) without the intercept."""
        return np.hstack([self.z, self.x])

    @property
    def w_bar(self) -> np.ndarray:
        """Index regressors (1, z, x)."""
        return np.hstack([np.ones((self.n, 1)), self.z, self.x])

    def with_y(self, y) -> "Dataset":
        return Dataset(y=y, d=self.d, z=self.z, x=self.x)
