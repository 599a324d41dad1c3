"""Per-pixel displacement fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass
class FlowField:
    """Dense 2-vector displacement raster plus a validity mask.

    u and v are x/y displacements in pixels; entries are only meaningful
    where valid is True, and must be finite there.
    """

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.valid is None:
            self.valid = np.ones(self.u.shape, dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool)
        if not (self.u.shape == self.v.shape == self.valid.shape) or self.u.ndim != 2:
            raise InvalidInputError("u, v, valid must share one 2-D shape")
        if self.valid.any():
            if not (np.isfinite(self.u[self.valid]).all() and np.isfinite(self.v[self.valid]).all()):
                raise InvalidInputError("flow has non-finite components on valid pixels")

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)), np.ones((height, width), bool))

    @classmethod
    def constant(cls, width: int, height: int, u: float, v: float) -> "FlowField":
        return cls(np.full((height, width), float(u)), np.full((height, width), float(v)),
                   np.ones((height, width), bool))

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def copy(self) -> "FlowField":
        return FlowField(self.u.copy(), self.v.copy(), self.valid.copy())

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)
