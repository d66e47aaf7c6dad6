"""Interleaved commonsense reasoning and probabilistic planning."""

__version__ = "0.1.0"
