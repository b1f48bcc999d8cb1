"""The observed data triplet and validation helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RdSample", "check_array_1d"]


def check_array_1d(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass
class RdSample:
    """Running variable, outcome, optional treatment receipt and covariates.

    ``x`` is stored as observed; side splits are taken relative to ``cutoff``
    (treated side is x >= cutoff).
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray | None = None
    z: np.ndarray | None = None
    cutoff: float = 0.0

    def __post_init__(self):
        self.x = check_array_1d(self.x, "x")
        self.y = check_array_1d(self.y, "y")
        if self.y.size != self.x.size:
            raise ValueError("x and y must have the same length")
        if self.t is not None:
            self.t = check_array_1d(self.t, "t")
            if self.t.size != self.x.size:
                raise ValueError("t must have the same length as x")
            if not np.all(np.isin(self.t, (0.0, 1.0))):
                raise ValueError("t entries must be exactly 0 or 1")
        if self.z is not None:
            self.z = np.asarray(self.z, dtype=float)
            if self.z.ndim == 1:
                self.z = self.z[:, None]
            if self.z.shape[0] != self.x.size:
                raise ValueError("z must have one row per observation")
            if not np.all(np.isfinite(self.z)):
                raise ValueError("z contains non-finite entries")
        self.cutoff = float(self.cutoff)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def x_centered(self) -> np.ndarray:
        return self.x - self.cutoff

    def side_mask(self, side: str) -> np.ndarray:
        xc = self.x_centered
        return xc >= 0 if side == "above" else xc < 0

    def side(self, side: str):
        """(x_centered, y[, t]) restricted to one side of the cutoff."""
        m = self.side_mask(side)
        if self.t is None:
            return self.x_centered[m], self.y[m]
        return self.x_centered[m], self.y[m], self.t[m]
