"""K-asynchronous federated learning simulator."""

from .config import ExperimentConfig, load_config
from .errors import (ConfigError, FormatError, KasyncError, NumericError, SamplingError,
                     UsageError)
from .simulator import Simulator, run

__all__ = [
    "ExperimentConfig", "load_config", "Simulator", "run",
    "KasyncError", "ConfigError", "FormatError", "NumericError", "SamplingError", "UsageError",
]
__version__ = "0.1.0"
