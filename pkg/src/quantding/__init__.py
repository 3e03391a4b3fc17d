"""Quantised Ding functional toolkit for model Fano manifolds."""

__version__ = "0.1.0"
