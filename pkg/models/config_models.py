"""
Run Configuration

This module defines the configuration of a command run: where the market
data comes from, the mixture parameters, and the settings of the filter,
the simulation studies and the artifact writer.
"""

import json
import os
from datetime import date
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from utils.exceptions import ConfigError

OUTPUT_DIR_ENV = "FDT_OUTPUT_DIR"


class MarketConfig(BaseModel):
    """Quote source, discounting and calibration strikes."""
    quotes_path: Optional[str] = Field(None, description="CSV quote file (date,strike,type,close,volume)")
    maturity_date: date = Field(..., description="Option expiry date")
    valuation_date: Optional[date] = Field(None, description="Calibration date; first quote date when omitted")
    rate: float = Field(..., description="Risk-free rate, continuously compounded")
    strikes: List[float] = Field(..., min_length=1, description="Calibration strikes K_1..K_n")
    volume_threshold: int = Field(0, ge=0, description="Minimum call volume for a strike to be kept")
    excluded_strikes: List[float] = Field(default_factory=list, description="Strikes dropped before calibration")
    forward: Optional[float] = Field(None, gt=0, description="Explicit forward G0, used instead of quotes")
    option_forwards: Optional[List[float]] = Field(None, description="Explicit forward call prices G_1..G_n")
    calibration_source: Literal["quotes", "smile"] = Field(
        "quotes", description="Use quoted option forwards or the fitted smile at the calibration strikes"
    )

    @field_validator("strikes")
    @classmethod
    def strikes_increasing(cls, v: List[float]) -> List[float]:
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("strikes must be strictly increasing")
        return v

    @model_validator(mode="after")
    def price_source(self):
        explicit = self.forward is not None and self.option_forwards is not None
        if not explicit and self.quotes_path is None:
            raise ValueError("give either quotes_path or forward with option_forwards")
        if self.option_forwards is not None and len(self.option_forwards) != len(self.strikes):
            raise ValueError("one option forward per strike is required")
        if explicit and self.valuation_date is None:
            raise ValueError("explicit prices need a valuation_date")
        return self

    @property
    def uses_quotes(self) -> bool:
        return self.forward is None or self.option_forwards is None


class ModelConfig(BaseModel):
    """Mixture grid and volatilities."""
    model_config = ConfigDict(protected_namespaces=())

    x_low: float = Field(..., gt=0, description="Lowest grid point x_1")
    x_high: float = Field(..., gt=0, description="Highest grid point x_{n+2}")
    sigma: List[float] = Field(..., description="Component volatilities, one per grid point")
    model_maturity: float = Field(1.0, gt=0, description="Model horizon T the expiry is mapped to")
    comparison_sigma: float = Field(0.01, gt=0, description="Uniform volatility of the comparison weights")
    origin: Optional[str] = Field(None, description="Provenance note copied into the spec file")


class FilterConfig(BaseModel):
    """Tracking settings."""
    method: Literal["linear", "filter"] = Field("filter", description="Default tracking method")
    truth: Literal["quotes", "simulated"] = Field("quotes", description="Track the quote series or a simulated path")
    n_particles: int = Field(250, ge=1, description="Number of particles R")
    sigma1_policy: Literal["observed-increments", "simulated-increments"] = Field(
        "observed-increments", description="Source of the first-stage covariance"
    )
    sigma2_policy: Literal["same", "observed-increments", "simulated-increments"] = Field(
        "same", description="Source of the second-stage covariance"
    )
    scheme: Literal["multinomial", "systematic"] = Field("multinomial", description="Resampling scheme")
    seed: int = Field(0, ge=0, description="Master seed of the filter streams")
    simulated_dt: float = Field(0.002, gt=0, description="Step of the simulated truth path")
    simulated_steps: int = Field(500, ge=1, description="Length of the simulated truth path")
    condition_limit: float = Field(1e12, gt=0, description="Jacobian condition number flagged as singular")


class SimulationConfig(BaseModel):
    """Monte-Carlo study settings."""
    n_paths: int = Field(5000, ge=1, description="Number of driver paths")
    n_steps: int = Field(50, ge=1, description="Steps per path")
    dt: Optional[float] = Field(None, gt=0, description="Step on the model clock; one calendar day when omitted")
    seed: int = Field(0, ge=0, description="Master seed of the driver streams")
    histogram_bins: int = Field(50, ge=1, description="Bins over [-1, 1] for the correlation histograms")
    martingale_time: float = Field(0.5, gt=0, lt=1, description="Evaluation time of the martingale check, as a fraction of T")
    martingale_samples: int = Field(100000, ge=2, description="Samples of the martingale check")


class OutputConfig(BaseModel):
    """Artifact locations and study grids."""
    directory: str = Field("output", description="Artifact directory")
    progress: bool = Field(False, description="Show progress bars")
    saved_paths: int = Field(10, ge=0, description="Simulated paths written out as CSV")
    smile_days: List[int] = Field(default_factory=lambda: [0, 10, 20, 30], description="Smile dates, in calendar days from the valuation date")
    smile_strikes: List[float] = Field(
        default_factory=lambda: [1050.0 + 10.0 * i for i in range(26)], description="Strike grid of the smiles"
    )
    density_times: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5], description="Model times of the densities")
    density_low: float = Field(900.0, gt=0, description="Lowest level of the density grid")
    density_high: float = Field(1400.0, gt=0, description="Highest level of the density grid")
    density_points: int = Field(501, ge=2, description="Points of the density grid")
    detscan_time: float = Field(0.5, ge=0, description="Model time of the determinant scan")
    detscan_range: float = Field(3.0, gt=0, description="Half width of the (w1, w2) scan box")
    detscan_points: int = Field(61, ge=2, description="Grid points per scan axis")


class RunConfig(BaseModel):
    """Complete configuration of a command run."""
    market: MarketConfig
    model: ModelConfig
    filter: FilterConfig = Field(default_factory=FilterConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    log_level: str = Field("INFO", description="loguru level of the console sink")

    @model_validator(mode="after")
    def grid_matches_strikes(self):
        n = len(self.market.strikes)
        if len(self.model.sigma) != n + 2:
            raise ValueError(f"sigma needs n + 2 = {n + 2} entries, got {len(self.model.sigma)}")
        if any(s <= 0 for s in self.model.sigma):
            raise ValueError("volatilities must be positive")
        if not self.model.x_low < self.market.strikes[0]:
            raise ValueError("x_low must lie below the first strike")
        if not self.model.x_high > self.market.strikes[-1]:
            raise ValueError("x_high must lie above the last strike")
        if set(self.market.excluded_strikes) & set(self.market.strikes):
            raise ValueError("a calibration strike cannot also be excluded")
        return self

    @property
    def grid(self) -> List[float]:
        return [self.model.x_low, *self.market.strikes, self.model.x_high]

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        """
        Load a JSON config; FDT_OUTPUT_DIR overrides the output directory.

        Raises:
            ConfigError: unreadable file or invalid content
        """
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}", {"path": str(path)})
        try:
            config = cls.model_validate(raw)
        except ValidationError as e:
            problems = [{"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]} for err in e.errors()]
            raise ConfigError(f"invalid config {path}: {problems[0]['loc']}: {problems[0]['msg']}", {"errors": problems})

        if config.market.quotes_path is not None and not Path(config.market.quotes_path).is_absolute():
            resolved = (path.parent / config.market.quotes_path)
            if not Path(config.market.quotes_path).exists() and resolved.exists():
                config.market.quotes_path = str(resolved)
        env_dir = os.getenv(OUTPUT_DIR_ENV)
        if env_dir:
            config.output.directory = env_dir
        return config
