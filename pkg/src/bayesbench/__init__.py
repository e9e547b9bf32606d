"""Benchmark black-box optimizers and analyse the results with Bayesian models."""

__version__ = "0.1.0"
