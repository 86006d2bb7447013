"""Fairness-based continual learning for wireless power control."""

__version__ = "0.1.0"
