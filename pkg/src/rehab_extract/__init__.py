"""Extraction of structured exercise concepts from rehabilitation therapy notes."""

__version__ = "0.1.0"
