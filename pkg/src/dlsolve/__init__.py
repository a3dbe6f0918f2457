"""Depth-limited solving with multi-valued states for two-player zero-sum games."""

__version__ = "0.1.0"
