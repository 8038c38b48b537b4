"""Branching random walks with stretched-exponential (Weibull) displacements: extremes, tails and limit laws."""

__version__ = "0.1.0"
