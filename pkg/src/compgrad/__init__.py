"""Composite policy-gradient estimators and toy contact benchmarks."""

__version__ = "0.1.0"
