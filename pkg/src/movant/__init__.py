"""Two-timescale antenna-position and covariance design for movable-antenna MIMO downlinks."""

from .config import SCHEMES, SystemConfig, load_config, preset
from .estimators import TwoTimescaleDesign
from .sim import run_experiment
from .two_timescale import SchemeId, run_scheme

__version__ = "0.1.0"

__all__ = [
    "SCHEMES",
    "SchemeId",
    "SystemConfig",
    "TwoTimescaleDesign",
    "load_config",
    "preset",
    "run_experiment",
    "run_scheme",
    "__version__",
]
