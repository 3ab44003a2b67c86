"""Null-space optical watermarking: simulate, protect, verify."""

__version__ = "0.1.0"
