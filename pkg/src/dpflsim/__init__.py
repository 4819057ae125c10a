"""Federated learning simulator with client-level differential privacy and
time-adaptive privacy-budget scheduling."""

__version__ = "0.1.0"
