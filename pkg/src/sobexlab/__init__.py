"""Numerical laboratory for Sobolev extension domains built from cylinders."""

__version__ = "0.1.0"
