"""Sparse continual learning with sharpness-aware Frank-Wolfe training."""

__version__ = "0.1.0"
