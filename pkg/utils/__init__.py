"""Utilities package for the forward-density toolkit.

This package contains helper functions for:
- Domain exceptions with machine-readable codes
- Normal distributions, bivariate orthant probabilities and guarded linear solves
- Reproducible random streams
- loguru setup and warning capture
- Market conventions and artifact writing

Quote ingestion lives in utils.data_utils, which builds on the pricing engine
and is imported from there directly.
"""

from .exceptions import (
    ConfigError,
    DegenerateDesign,
    DivisionDegenerate,
    DomainError,
    ForwardDensityError,
    InfeasibleAtFloor,
    InfeasiblePrices,
    MalformedRow,
    MissingPair,
    NonPositiveSmile,
    NoSolution,
    OutOfRange,
    SingularJacobian,
    SingularSystem,
    WeightCollapse,
)
from .io_utils import SCHEMA_VERSION, read_frame, read_json, write_frame, write_json
from .logging_utils import WarningCollector, configure_logging
from .market_conventions import MarketConventions
from .numeric_utils import bivariate_normal_cdf, norm_cdf, norm_pdf, solve_with_condition
from .rng_utils import SeedStreams

__all__ = [
    # Exceptions
    'ForwardDensityError',
    'DomainError',
    'NoSolution',
    'DegenerateDesign',
    'NonPositiveSmile',
    'DivisionDegenerate',
    'InfeasiblePrices',
    'SingularSystem',
    'OutOfRange',
    'InfeasibleAtFloor',
    'SingularJacobian',
    'WeightCollapse',
    'MalformedRow',
    'MissingPair',
    'ConfigError',

    # Numerics
    'norm_cdf',
    'norm_pdf',
    'bivariate_normal_cdf',
    'solve_with_condition',
    'SeedStreams',

    # Logging and IO
    'configure_logging',
    'WarningCollector',
    'MarketConventions',
    'SCHEMA_VERSION',
    'write_json',
    'read_json',
    'write_frame',
    'read_frame'
]
