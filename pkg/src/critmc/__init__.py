"""Simulation and numerics for bounded-size rule random graphs at criticality."""

__version__ = "0.1.0"
