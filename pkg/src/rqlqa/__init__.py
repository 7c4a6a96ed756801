"""Recommendation-question parsing and answering toolkit."""

__version__ = "0.1.0"
