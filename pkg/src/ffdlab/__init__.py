"""ffdlab: fractional differencing, barrier labeling, residual MLP
classification and rule-based futures backtesting."""

__version__ = "0.1.0"

from .errors import FfdlabError

__all__ = ["FfdlabError", "__version__"]
