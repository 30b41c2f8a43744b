"""Quantum linear Boltzmann equation: rate kernels, limits and trajectory simulation."""

__version__ = "0.1.0"
