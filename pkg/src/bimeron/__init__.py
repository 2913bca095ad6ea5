"""Degree -1 bimerons in thin easy-plane films with small DMI: quadrature, descent, and Möbius fits."""

__version__ = "0.1.0"
