"""Simulation and inference for long-memory Lévy-driven moving averages."""

__version__ = "0.1.0"
