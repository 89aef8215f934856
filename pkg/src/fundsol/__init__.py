"""Fundamental solutions of higher-order Schrödinger equations."""

from fundsol.__about__ import __version__

__all__ = ["__version__"]
