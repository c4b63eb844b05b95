"""Effective Hamiltonians and stochastic Mather measures on the torus."""

__version__ = "0.1.0"
