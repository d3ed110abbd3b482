"""Qualitative-interaction-aware pedestrian trajectory prediction toolkit."""

__version__ = "0.1.0"
