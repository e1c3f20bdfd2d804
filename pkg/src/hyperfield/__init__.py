"""Timestep-conditioned hypernetwork fields for occupancy-network weight prediction."""

__version__ = "0.1.0"
