"""Numerics for random quantum processes, non-Markovianity and equilibration bounds."""

__version__ = "0.1.0"
