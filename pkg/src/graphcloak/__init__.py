"""Cloak graph-classification datasets against unauthorised training."""

__version__ = "0.1.0"
