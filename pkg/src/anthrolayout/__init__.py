"""Behavior-aware, anthropometrically parameterized furniture layout."""

__version__ = "0.1.0"
