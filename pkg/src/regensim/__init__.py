"""Simulation and output analysis for regenerative Markov processes."""

__version__ = "0.1.0"
