"""Spatio-temporal recurrent network for skeletal motion manifolds."""

__version__ = "0.1.0"
