"""
Mixture Models

This module defines the calibrated lognormal-mixture model and the objects
produced while analysing it: grid bounds, static-arbitrage reports, the
model's reachable price range and the cone partition of the driver plane.
"""

from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

HALF_PI = 0.5 * np.pi
TWO_PI = 2.0 * np.pi


class Cone(BaseModel):
    """Angular sector {r (cos a, sin a): r >= 0, phi <= a <= phi + theta} of the plane."""
    model_config = ConfigDict(frozen=True)

    phi: float = Field(..., description="Base angle in radians")
    theta: float = Field(..., ge=0, le=TWO_PI, description="Opening width in radians")

    def split(self) -> List["Cone"]:
        """Contiguous sub-cones of width at most pi/2 covering this cone."""
        if self.theta == 0.0:
            return []
        pieces = max(1, int(np.ceil(self.theta / HALF_PI - 1e-12)))
        width = self.theta / pieces
        return [Cone(phi=self.phi + i * width, theta=width) for i in range(pieces)]

    def contains_angle(self, angle: float) -> bool:
        offset = (angle - self.phi) % TWO_PI
        return offset <= self.theta


class MixtureSpec(BaseModel):
    """
    Calibrated lognormal-mixture model for the forward density at maturity.

    The grid has n+2 points with x_k = K_{k-1} for k = 2..n+1. For n = 2 the
    driver plane is partitioned into four contiguous cones starting at angle 0.
    """
    strikes: List[float] = Field(..., min_length=1, description="Calibration strikes K_1..K_n")
    grid: List[float] = Field(..., description="Component levels x_1..x_{n+2}")
    sigma: List[float] = Field(..., description="Component volatilities, annualized on the model clock")
    p0: List[float] = Field(..., description="Initial mixture weights")
    maturity: float = Field(1.0, gt=0, description="Model horizon T")
    cone_angles: Optional[List[float]] = Field(None, description="Cone base angles phi_k (n = 2 only)")
    cone_widths: Optional[List[float]] = Field(None, description="Cone widths theta_k (n = 2 only)")
    condition_number: Optional[float] = Field(None, description="1-norm condition number of the calibration matrix")
    origin: Optional[str] = Field(None, description="Where the parameter set comes from")

    @model_validator(mode="after")
    def check_grid(self):
        n = len(self.strikes)
        if len(self.grid) != n + 2 or len(self.sigma) != n + 2 or len(self.p0) != n + 2:
            raise ValueError("grid, sigma and p0 must have n + 2 entries")
        if not self.grid[0] < self.strikes[0] or not self.grid[-1] > self.strikes[-1]:
            raise ValueError("x_1 must lie below K_1 and x_{n+2} above K_n")
        if any(abs(x - k) > 1e-9 * max(1.0, abs(k)) for x, k in zip(self.grid[1:-1], self.strikes)):
            raise ValueError("interior grid points must equal the strikes")
        if any(s <= 0 for s in self.sigma):
            raise ValueError("volatilities must be positive")
        if any(p < -1e-10 for p in self.p0) or abs(sum(self.p0) - 1.0) > 1e-9:
            raise ValueError("p0 must be a probability vector")
        if self.cone_widths is not None:
            if self.cone_angles is None or len(self.cone_widths) != n + 2:
                raise ValueError("cone partition must have one cone per component")
            if abs(sum(self.cone_widths) - TWO_PI) > 1e-9:
                raise ValueError("cone widths must sum to 2 pi")
        return self

    @property
    def n(self) -> int:
        return len(self.strikes)

    @property
    def has_partition(self) -> bool:
        return self.cone_widths is not None

    def arrays(self) -> Dict[str, np.ndarray]:
        return {
            "strikes": np.asarray(self.strikes, dtype=float),
            "grid": np.asarray(self.grid, dtype=float),
            "sigma": np.asarray(self.sigma, dtype=float),
            "p0": np.asarray(self.p0, dtype=float),
        }

    def cones(self) -> List[Cone]:
        if not self.has_partition:
            raise ValueError("spec carries no cone partition")
        return [Cone(phi=a, theta=w) for a, w in zip(self.cone_angles, self.cone_widths)]


class GridBounds(BaseModel):
    """Largest admissible x_1 and smallest admissible x_{n+2}."""
    x1_max: float = Field(..., description="Upper bound for the lowest grid point")
    x_top_min: float = Field(..., description="Lower bound for the highest grid point")


class ArbitrageCondition(BaseModel):
    """One vertical-spread or butterfly inequality evaluated on a snapshot."""
    kind: str = Field(..., description="'vertical_lower', 'vertical_upper' or 'butterfly'")
    index: int = Field(..., description="Strike index j the inequality refers to")
    slack: float = Field(..., description="Distance to violation; negative when violated")

    @property
    def passed(self) -> bool:
        return self.slack >= -1e-12


class ArbitrageReport(BaseModel):
    """Static no-arbitrage check of a snapshot."""
    conditions: List[ArbitrageCondition] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def failures(self) -> List[ArbitrageCondition]:
        return [c for c in self.conditions if not c.passed]


class PriceRange(BaseModel):
    """Extreme price vectors b_k = A e_k of the model, one per component."""
    extremes: List[List[float]] = Field(..., description="Columns of A without the probability row")
    system_matrix: List[List[float]] = Field(..., description="Full calibration matrix A")

    def extreme_array(self) -> np.ndarray:
        return np.asarray(self.extremes, dtype=float)


class CalibrationDiagnostics(BaseModel):
    """Everything the calibrate command reports next to the spec."""
    bounds: GridBounds
    sigma_star: Optional[float] = Field(None, description="Largest feasible uniform volatility")
    condition_number: float = Field(..., description="Condition number of the calibration matrix")
    repricing_residual: float = Field(..., description="Max relative error of A p0 against the snapshot")
    arbitrage: ArbitrageReport
    comparison_weights: Optional[List[float]] = Field(None, description="Weights at the comparison volatility")
    comparison_sigma: Optional[float] = Field(None, description="Uniform volatility used for the comparison weights")
    notes: List[str] = Field(default_factory=list)
