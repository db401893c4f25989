"""Engines package for the forward-density toolkit.

This package contains the computational engines:
- black_pricing: Black forward pricing, implied volatility, smiles and implied densities
- static_calibration: no-arbitrage checks, grid bounds and the mixture calibration
- forward_dynamics: cone probabilities, price map, Jacobian and forward density
- tracking: local linearization and the auxiliary particle filter
- simulation: driver paths, stylized facts and the martingale check
- orchestrator: command runs with artifact manifests
"""

from .black_pricing import black_forward_price, discount_to_spot, fit_smile, forward_from_parity, implied_vol
from .forward_dynamics import ForwardDensityModel, price_jacobian, price_map
from .static_calibration import calibrate_mixture, grid_bounds, max_uniform_sigma
from .tracking import apf_run, apf_step, linearized_track

__all__ = [
    'black_forward_price',
    'discount_to_spot',
    'implied_vol',
    'forward_from_parity',
    'fit_smile',
    'calibrate_mixture',
    'grid_bounds',
    'max_uniform_sigma',
    'ForwardDensityModel',
    'price_map',
    'price_jacobian',
    'linearized_track',
    'apf_step',
    'apf_run'
]
