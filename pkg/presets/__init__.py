"""Presets package.

Published parameter sets:
- SP500_N2: forward plus calls at 1150 and 1200
- SP500_N5: forward plus calls from 1100 to 1300
"""

from .parameter_sets import PARAMETER_SETS, SP500_N2, SP500_N5, ParameterSet

__all__ = [
    'ParameterSet',
    'SP500_N2',
    'SP500_N5',
    'PARAMETER_SETS'
]
