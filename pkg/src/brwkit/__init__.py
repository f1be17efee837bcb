"""Simulation and statistical checks for boundary-case branching random walks."""

__version__ = "0.1.0"
