"""Graph-feature botnet detection: capture -> windowed graphs -> per-host LSTM verdicts."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BotgraphError,
    ConfigurationError,
    ConvergenceError,
    DivergenceError,
    InputFormatError,
    NumericError,
)
from .graphfeat import FEATURE_NAMES, N_FEATURES  # noqa: E402

__all__ = [
    "__version__",
    "BotgraphError",
    "ConfigurationError",
    "ConvergenceError",
    "DivergenceError",
    "InputFormatError",
    "NumericError",
    "FEATURE_NAMES",
    "N_FEATURES",
]
