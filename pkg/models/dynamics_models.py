"""
Dynamics Models

Plain numeric containers for the driver state and the quantities evaluated on
it. These sit on the hot path of the filter and the simulation, so they are
dataclasses over numpy arrays rather than validated pydantic models.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class DriverState:
    """A point (w, b) of the Brownian driver at model time t."""
    w: Tuple[float, ...]
    b: float
    t: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        return np.array([*self.w, self.b], dtype=float)

    @classmethod
    def from_vector(cls, v, t: float = 0.0) -> "DriverState":
        v = np.asarray(v, dtype=float)
        return cls(w=tuple(float(c) for c in v[:-1]), b=float(v[-1]), t=float(t))

    @classmethod
    def origin(cls, n: int = 2, t: float = 0.0) -> "DriverState":
        return cls(w=(0.0,) * n, b=0.0, t=t)


@dataclass
class MixtureWeights:
    """Time-t weights p_t and their gradients with respect to w."""
    weights: np.ndarray
    gradients: np.ndarray  # (n+2, n), row k holds dp_k/dw


@dataclass
class JacobianMatrix:
    """Partials of the price map; rows (h0, ..., hn), columns (w_1, ..., w_n, b)."""
    matrix: np.ndarray
    determinant: float
    condition: float


@dataclass
class DeterminantScan:
    """Jacobian determinant on a rectangular grid of w at fixed (t, b)."""
    t: float
    b: float
    w1: np.ndarray
    w2: np.ndarray
    det: np.ndarray  # shape (len(w2), len(w1))
    sign_change: np.ndarray = field(default=None)

    def zero_cells(self) -> np.ndarray:
        """Centres (w1, w2) of the cells whose corners disagree in sign."""
        rows, cols = np.nonzero(self.sign_change)
        x = 0.5 * (self.w1[cols] + self.w1[cols + 1])
        y = 0.5 * (self.w2[rows] + self.w2[rows + 1])
        return np.column_stack([x, y])

    def to_frame(self) -> pd.DataFrame:
        gx, gy = np.meshgrid(self.w1, self.w2)
        return pd.DataFrame({"w1": gx.ravel(), "w2": gy.ravel(), "det": self.det.ravel()})
