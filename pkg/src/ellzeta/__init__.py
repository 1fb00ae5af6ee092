"""Elliptic multiple zeta values and the elliptic KZB associator."""

__version__ = "0.1.0"
