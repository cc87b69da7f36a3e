"""Stationary measures of the open ASEP and of KPZ on an interval.

Exact matrix-product computations, reweighted-walk samplers, a Gillespie
simulator and a continuum path sampler, plus a command-line harness.
"""

__version__ = "0.1.0"

from .params import (
    ModelParams,
    ParameterError,
    ScalingParams,
    from_densities,
    from_rates,
    q_int,
    q_pochhammer,
    weak_asymmetry,
)
from .rng import RandomStream

__all__ = [
    "ModelParams",
    "ParameterError",
    "RandomStream",
    "ScalingParams",
    "__version__",
    "from_densities",
    "from_rates",
    "q_int",
    "q_pochhammer",
    "weak_asymmetry",
]
