"""Simulator and attack analysis for a GHZ-like-state hybrid SQKD/SQSS protocol."""

__version__ = "0.1.0"
