"""Desk-scale toolkit for covering numbers, rate distortion, and mean dimension."""

__version__ = "0.1.0"
