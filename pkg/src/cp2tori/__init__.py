"""Totally real minimal surfaces in CP^2 from finite-type flows, unitary frames and theta functions."""
__version__ = "0.1.0"
