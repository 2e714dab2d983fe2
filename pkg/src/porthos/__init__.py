"""Bounded portability checking between axiomatic weak memory models."""

__version__ = "0.1.0"
