"""Data-oblivious video analytics primitives, decoder, vision modules and trace oracle."""

__version__ = "0.1.0"
