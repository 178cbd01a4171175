"""SSM-only text-to-speech conditioning engine."""

__version__ = "0.1.0"
