"""Exact and shadow-based estimation of higher-point out-of-time-ordered correlators."""

__version__ = "0.1.0"
