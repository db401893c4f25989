"""Models package for the forward-density toolkit.

This package contains all data models:
- Market Models: quotes, discounting, market snapshots and smile fits
- Mixture Models: the calibrated mixture, cones, price ranges and diagnostics
- Dynamics Models: driver states, weights, Jacobians and determinant scans
- Tracking Models: price paths, particle clouds, tracking results and study statistics
- Config Models: the run configuration
"""

from .config_models import FilterConfig, MarketConfig, ModelConfig, OutputConfig, RunConfig, SimulationConfig
from .dynamics_models import DeterminantScan, DriverState, JacobianMatrix, MixtureWeights
from .market_models import DiscountContext, MarketSnapshot, OptionType, QuoteRecord, SmileFit
from .mixture_models import (
    ArbitrageCondition,
    ArbitrageReport,
    CalibrationDiagnostics,
    Cone,
    GridBounds,
    MixtureSpec,
    PriceRange,
)
from .tracking_models import (
    MartingaleReport,
    ParticleCloud,
    PricePath,
    PricePaths,
    SmileSnapshot,
    StylizedStats,
    TrackingErrors,
    TrackResult,
)

__all__ = [
    # Market
    'OptionType',
    'QuoteRecord',
    'DiscountContext',
    'MarketSnapshot',
    'SmileFit',

    # Mixture
    'Cone',
    'MixtureSpec',
    'GridBounds',
    'ArbitrageCondition',
    'ArbitrageReport',
    'PriceRange',
    'CalibrationDiagnostics',

    # Dynamics
    'DriverState',
    'MixtureWeights',
    'JacobianMatrix',
    'DeterminantScan',

    # Tracking and simulation
    'PricePath',
    'PricePaths',
    'ParticleCloud',
    'TrackResult',
    'TrackingErrors',
    'StylizedStats',
    'MartingaleReport',
    'SmileSnapshot',

    # Configuration
    'RunConfig',
    'MarketConfig',
    'ModelConfig',
    'FilterConfig',
    'SimulationConfig',
    'OutputConfig'
]
