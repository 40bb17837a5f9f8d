"""Landmark-driven face video synthesis with adversarial training."""

__version__ = "0.1.0"
