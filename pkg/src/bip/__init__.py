"""Bayesian inversion for dissipative PDE initial conditions."""

__version__ = "0.1.0"
