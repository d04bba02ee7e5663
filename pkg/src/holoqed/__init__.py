"""Pulse-level control and holographic simulation for a transmon-cavity device."""

__version__ = "0.1.0"
