"""Distilling summariser attention into a lightweight gist detector."""
__version__ = "0.1.0"
