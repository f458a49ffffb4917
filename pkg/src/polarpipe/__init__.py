"""Measurement pipeline for affective polarization in politicians' tweets."""

__version__ = "0.1.0"
