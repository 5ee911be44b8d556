"""Matching for covariate balance: solver, estimators and diagnostics."""

__version__ = "0.1.0"
