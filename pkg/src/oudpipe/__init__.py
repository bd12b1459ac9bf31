"""Opioid use disorder risk modeling from claims data."""

__version__ = "0.1.0"
