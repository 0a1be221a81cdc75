"""Rare adverse drug reaction signal detection from longitudinal coded records."""

__version__ = "0.1.0"
