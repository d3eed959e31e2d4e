"""Bayesian spike-and-slab estimation of random-coefficients logit demand."""

__version__ = "0.1.0"
