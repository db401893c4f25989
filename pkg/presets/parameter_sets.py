# parameter_sets.py - Published index-option setups used as defaults and test fixtures

from dataclasses import dataclass, field
from datetime import date
from typing import List

from models.market_models import MarketSnapshot

RATE = 0.005
VALUATION_DATE = date(2011, 9, 22)
MATURITY_DATE = date(2011, 11, 19)
FORWARD = 1128.12


@dataclass(frozen=True)
class ParameterSet:
    """A market snapshot together with the grid and volatilities chosen for it."""
    name: str
    strikes: List[float]
    option_forwards: List[float]
    grid: List[float]
    sigma: List[float]
    origin: str
    forward: float = FORWARD
    rate: float = RATE
    valuation_date: date = VALUATION_DATE
    maturity_date: date = MATURITY_DATE
    model_maturity: float = 1.0
    notes: List[str] = field(default_factory=list)

    @property
    def days_to_expiry(self) -> int:
        return (self.maturity_date - self.valuation_date).days

    def snapshot(self) -> MarketSnapshot:
        return MarketSnapshot(
            tau=self.days_to_expiry / 365.0,
            rate=self.rate,
            forward=self.forward,
            strikes=list(self.strikes),
            option_forwards=list(self.option_forwards),
            valuation_date=self.valuation_date,
            source=f"preset:{self.name}",
        )


SP500_N2 = ParameterSet(
    name="sp500_n2",
    strikes=[1150.0, 1200.0],
    option_forwards=[49.615, 26.455],
    grid=[950.0, 1150.0, 1200.0, 1300.0],
    sigma=[0.18, 0.08, 0.06, 0.03],
    origin="published two-option index setup, 2011-09-22 quotes, expiry 2011-11-19",
)

SP500_N5 = ParameterSet(
    name="sp500_n5",
    strikes=[1100.0, 1150.0, 1200.0, 1250.0, 1300.0],
    option_forwards=[79.8803, 49.615, 26.455, 11.258, 3.418165],
    grid=[950.0, 1100.0, 1150.0, 1200.0, 1250.0, 1300.0, 1400.0],
    sigma=[0.21, 0.045, 0.028, 0.025, 0.025, 0.02, 0.01],
    origin="published five-option index setup, 2011-09-22 quotes, expiry 2011-11-19",
    notes=[
        "G(1100), G(1250) and G(1300) are recovered from the published grid bounds and maximal uniform volatility",
    ],
)

PARAMETER_SETS = {p.name: p for p in (SP500_N2, SP500_N5)}
