"""Quasi-Bayesian inference for linear moment conditions with modified delayed-acceptance MCMC."""

__version__ = "0.1.0"
