"""Boundary-layer aware operator learning on singularly perturbed problems."""

__version__ = "0.1.0"

from .estimators import ComFNORegressor, FNORegressor

__all__ = ["ComFNORegressor", "FNORegressor", "__version__"]
