"""Tooling for MT quality-score and error-span evaluation."""

__version__ = "0.1.0"
