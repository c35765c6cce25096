"""Rigorous interval tooling for scoring sphere packings against the FCC bound."""

__version__ = "0.1.0"
