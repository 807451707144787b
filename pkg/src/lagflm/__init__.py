"""Lag historical functional linear model for dense and sparse functional predictors."""

__version__ = "0.1.0"
