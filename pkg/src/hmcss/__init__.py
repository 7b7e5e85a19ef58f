"""Subset Simulation with Hamiltonian Monte Carlo conditional samplers."""

__version__ = "0.1.0"
