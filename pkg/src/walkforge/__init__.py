"""Walk-forward daily close forecasting.

Pipeline: ingest (CSV or synthetic) -> indicator feature expansion ->
robust scaling -> forest-based feature selection -> walk-forward batching
-> recurrent and baseline regressors -> USD error metrics and reports.
"""

from .errors import ConfigError, DataError, NumericError, WalkforgeError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "WalkforgeError",
    "__version__",
]
