"""Simulator parameter calibration by differential evolution."""

__version__ = "0.1.0"
