"""
Market Models

This module defines the market-side data models: individual option quotes,
discounting context, the cleaned per-date market snapshot consumed by the
calibration engine, and the quadratic volatility smile.
"""

from datetime import date
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class OptionType(str, Enum):
    """European option payoff types."""
    CALL = "call"
    PUT = "put"


class QuoteRecord(BaseModel):
    """One row of the quote file: a daily closing option price."""
    model_config = ConfigDict(frozen=True)

    trade_date: date = Field(..., description="Trading date of the closing price")
    strike: float = Field(..., gt=0, description="Strike price in currency units")
    option_type: OptionType = Field(..., description="Call or put")
    close: float = Field(..., ge=0, description="Closing option price (spot, discounted)")
    volume: int = Field(..., ge=0, description="Number of registered trades on the date")


class DiscountContext(BaseModel):
    """Continuously compounded rate and time to maturity."""
    model_config = ConfigDict(frozen=True)

    rate: float = Field(..., description="Risk-free rate, continuously compounded, per year")
    tau: float = Field(..., ge=0, description="Time to maturity T - t in years")

    @property
    def discount_factor(self) -> float:
        return float(np.exp(-self.rate * self.tau))

    @property
    def growth_factor(self) -> float:
        return float(np.exp(self.rate * self.tau))


class MarketSnapshot(BaseModel):
    """
    Cleaned market state at one date.

    Holds the forward of the underlying and the forward prices of n calls,
    i.e. the right-hand side (G0, G1, ..., Gn) of the calibration system.
    """
    tau: float = Field(..., ge=0, description="Years to maturity, actual/365")
    rate: float = Field(0.0, description="Risk-free rate, continuously compounded")
    forward: float = Field(..., gt=0, description="Forward price G0 of the underlying")
    strikes: List[float] = Field(..., min_length=1, description="Call strikes K_1 < ... < K_n")
    option_forwards: List[float] = Field(..., min_length=1, description="Forward call prices G_1, ..., G_n")
    valuation_date: Optional[date] = Field(None, description="Quote date the snapshot was built from")
    source: str = Field("manual", description="Provenance of the prices")

    @field_validator("strikes")
    @classmethod
    def strikes_increasing(cls, v: List[float]) -> List[float]:
        if any(k <= 0 for k in v):
            raise ValueError("strikes must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("strikes must be strictly increasing")
        return v

    @field_validator("option_forwards")
    @classmethod
    def prices_non_negative(cls, v: List[float]) -> List[float]:
        if any(g < 0 for g in v):
            raise ValueError("option prices must be non-negative")
        return v

    @model_validator(mode="after")
    def lengths_match(self):
        if len(self.strikes) != len(self.option_forwards):
            raise ValueError("one option forward per strike is required")
        return self

    @property
    def n(self) -> int:
        return len(self.strikes)

    @property
    def discount(self) -> DiscountContext:
        return DiscountContext(rate=self.rate, tau=self.tau)

    def price_vector(self) -> np.ndarray:
        """(G0, G1, ..., Gn)."""
        return np.array([self.forward, *self.option_forwards], dtype=float)

    def calibration_target(self) -> np.ndarray:
        """(1, G0, G1, ..., Gn), the right-hand side b of A p = b."""
        return np.concatenate(([1.0], self.price_vector()))

    def strike_array(self) -> np.ndarray:
        return np.asarray(self.strikes, dtype=float)


class SmileFit(BaseModel):
    """Quadratic implied-volatility smile K -> a0 + a1 K + a2 K^2."""
    model_config = ConfigDict(frozen=True)

    a0: float = Field(..., description="Constant coefficient")
    a1: float = Field(..., description="Linear coefficient, per currency unit")
    a2: float = Field(..., description="Quadratic coefficient, per squared currency unit")
    strike_min: float = Field(..., description="Smallest fitted strike")
    strike_max: float = Field(..., description="Largest fitted strike")
    residuals: List[float] = Field(default_factory=list, description="Fitted minus observed volatilities")

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.a0, self.a1, self.a2])

    def volatility(self, strikes):
        """Smile volatility, flat beyond the fitted strike range."""
        k = np.clip(np.asarray(strikes, dtype=float), self.strike_min, self.strike_max)
        return self.a0 + self.a1 * k + self.a2 * k * k

    def slope(self, strike: float) -> float:
        return float(self.a1 + 2.0 * self.a2 * strike)
