"""
Tracking and Simulation Models

Containers for price paths, particle clouds, tracking results and the
statistics produced by the simulation studies.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd


def price_columns(n: int) -> List[str]:
    return ["G0"] + [f"G{j}" for j in range(1, n + 1)]


def driver_columns(n: int) -> List[str]:
    return [f"w{i}" for i in range(1, n + 1)] + ["b"]


@dataclass
class PricePath:
    """One time series of forward-price vectors (G0, G1, ..., Gn)."""
    times: np.ndarray
    prices: np.ndarray  # (m, n+1)
    driver: Optional[np.ndarray] = None  # (m, n+1)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.prices = np.asarray(self.prices, dtype=float)
        if self.prices.ndim != 2 or self.prices.shape[0] != self.times.size:
            raise ValueError("prices must have one row per time")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def n(self) -> int:
        return self.prices.shape[1] - 1

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.prices, columns=price_columns(self.n))
        df.insert(0, "t", self.times)
        if self.driver is not None:
            for name, col in zip(driver_columns(self.n), self.driver.T):
                df[name] = col
        return df


@dataclass
class PricePaths:
    """A batch of simulated paths on a common time grid."""
    times: np.ndarray
    prices: np.ndarray  # (paths, m, n+1)
    drivers: Optional[np.ndarray] = None  # (paths, m, n+1)

    @property
    def n_paths(self) -> int:
        return self.prices.shape[0]

    def path(self, i: int) -> PricePath:
        driver = None if self.drivers is None else self.drivers[i]
        return PricePath(times=self.times, prices=self.prices[i], driver=driver)


@dataclass
class ParticleCloud:
    """R weighted driver hypotheses at one observation time."""
    t: float
    particles: np.ndarray  # (R, n+1)
    weights: Optional[np.ndarray] = None
    stream_id: int = 0
    ess: Optional[float] = None

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        if self.particles.shape[0] < 1:
            raise ValueError("a cloud needs at least one particle")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.particles.shape[0],) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("weights must be a probability vector over particles")
            self.weights = w

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    def normalized_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.size, 1.0 / self.size)
        return self.weights

    def mean(self) -> np.ndarray:
        return self.normalized_weights() @ self.particles

    def std(self) -> np.ndarray:
        w = self.normalized_weights()
        centred = self.particles - self.mean()
        return np.sqrt(w @ (centred ** 2))


@dataclass
class TrackResult:
    """Per-step driver estimates and reconstructed prices of one tracking run."""
    method: str
    times: np.ndarray
    estimates: np.ndarray  # (m, n+1)
    prices: np.ndarray  # (m, n+1)
    diagnostic_name: str
    diagnostics: np.ndarray  # condition number or effective sample size per step
    flags: np.ndarray = field(default=None)
    bands: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        m = len(self.times)
        if self.flags is None:
            self.flags = np.zeros(m, dtype=bool)
        if not (self.estimates.shape[0] == self.prices.shape[0] == len(self.diagnostics) == m):
            raise ValueError("all per-step arrays must have one entry per observation")

    @property
    def n(self) -> int:
        return self.prices.shape[1] - 1

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"t": self.times})
        for name, col in zip(driver_columns(self.n), self.estimates.T):
            df[name] = col
        for name, col in zip(price_columns(self.n), self.prices.T):
            df[name] = col
        df[self.diagnostic_name] = self.diagnostics
        df["flagged"] = self.flags.astype(int)
        for name, values in self.bands.items():
            for j, col in enumerate(np.atleast_2d(values.T)):
                df[f"{name}_{j}"] = col
        return df


@dataclass
class TrackingErrors:
    """Accuracy of reconstructed prices against a reference series."""
    mae: np.ndarray
    rmse: np.ndarray
    normalized_mae: np.ndarray
    relative_rmse: np.ndarray
    increment_relative_mae: np.ndarray

    def to_dict(self) -> Dict[str, List[float]]:
        return {k: [float(x) for x in v] for k, v in self.__dict__.items()}


@dataclass
class StylizedStats:
    """Per-path correlations between forward log-returns and implied-vol changes."""
    strikes: List[float]
    correlations: np.ndarray  # (kept paths, strikes)
    dropped: int
    bin_edges: np.ndarray
    histograms: np.ndarray  # (strikes, bins)

    @property
    def means(self) -> np.ndarray:
        if self.correlations.shape[0] == 0:
            return np.full(len(self.strikes), np.nan)
        return self.correlations.mean(axis=0)

    @property
    def negative_fraction(self) -> np.ndarray:
        if self.correlations.shape[0] == 0:
            return np.full(len(self.strikes), np.nan)
        return (self.correlations < 0).mean(axis=0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.correlations, columns=[f"K{k:g}" for k in self.strikes])

    def histogram_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"bin_lo": self.bin_edges[:-1], "bin_hi": self.bin_edges[1:]})
        for k, counts in zip(self.strikes, self.histograms):
            df[f"K{k:g}"] = counts
        return df


@dataclass
class MartingaleReport:
    """Monte-Carlo means of prices and weights at time t against their t = 0 values."""
    t: float
    n_samples: int
    initial: np.ndarray
    mc_mean: np.ndarray
    standard_error: np.ndarray
    weight_initial: np.ndarray
    weight_mean: np.ndarray
    weight_standard_error: np.ndarray

    @property
    def z_scores(self) -> np.ndarray:
        return (self.mc_mean - self.initial) / self.standard_error

    @property
    def weight_z_scores(self) -> np.ndarray:
        return (self.weight_mean - self.weight_initial) / self.weight_standard_error


@dataclass
class SmileSnapshot:
    """Implied volatilities of the model call curve at one time."""
    t: float
    forward: float
    strikes: np.ndarray
    vols: np.ndarray
    failures: List[float] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"strike": self.strikes, "implied_vol": self.vols})
