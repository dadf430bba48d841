"""Monte Carlo bounds on the information rate of AWGN channels with ARMA phase noise."""
__version__ = "0.1.0"

from . import bounds, ekf, gaussian, harness, model, oracle, pf
from .bounds import BoundEstimate, TrackerChoice, lower_bound, upper_bound
from .exceptions import ConfigError, EstimatorError, NonPSDError, UnstableFilterError
from .model import (ArmaSpec, ChannelParams, Constellation, build_from_zero_pole,
                    generate_trace, get_constellation, wiener_spec)

__all__ = [
    "bounds", "ekf", "gaussian", "harness", "model", "oracle", "pf",
    "BoundEstimate", "TrackerChoice", "lower_bound", "upper_bound",
    "ConfigError", "EstimatorError", "NonPSDError", "UnstableFilterError",
    "ArmaSpec", "ChannelParams", "Constellation", "build_from_zero_pole",
    "generate_trace", "get_constellation", "wiener_spec",
]
