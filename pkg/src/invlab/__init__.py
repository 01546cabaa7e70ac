"""Finite-horizon inventory control with random delivery delays."""
__version__ = "0.1.0"
