"""Functional data analysis of age-at-death curves.

Pipeline: ingest period life tables into normalized death-count panels,
smooth each curve with penalized B-splines, then explore the fitted
curves with functional PCA and three clustering routes (two-stage
k-means, hierarchical under a component-score distance, and a Gaussian
subspace-mixture model selected by BIC).
"""

__version__ = "0.1.0"

from ._core import backend_name
from .errors import ConfigError, DataError, FcurveError, NumericError

__all__ = [
    "ConfigError",
    "DataError",
    "FcurveError",
    "NumericError",
    "backend_name",
    "__version__",
]
